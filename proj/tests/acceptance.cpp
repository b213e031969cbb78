// Acceptance run: one PASS/FAIL line per criterion, band details indented
// below it. Exit status 1 when any criterion fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cornerheat/errors.hpp"
#include "cornerheat/fem.hpp"
#include "cornerheat/harness.hpp"
#include "cornerheat/singular.hpp"

using namespace cornerheat;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

Check runtime(const std::string& what, double secs, double limit) {
  return {what + " runtime < " + fmt(limit, 4) + " s", secs < limit, fmt(secs, 3) + " s"};
}

int failures = 0;

void report(int id, const std::string& title, const std::vector<Check>& checks) {
  bool ok = !checks.empty();
  for (const auto& c : checks) ok = ok && c.pass;
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << title << '\n';
  for (const auto& c : checks) {
    std::cout << "    " << (c.pass ? "ok   " : "FAIL ") << c.name << ": " << c.detail << '\n';
  }
  std::cout.flush();
}

// Runs `body`, converting an exception into a failed check.
std::vector<Check> guarded(const std::function<std::vector<Check>()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    return {{"completed without error", false, e.what()}};
  }
}

// Property suites ------------------------------------------------------------

constexpr double kPi = std::numbers::pi;

Check local_matrices() {
  double worst = 0.0;
  const auto k = local_stiffness({Point2{0, 0}, Point2{1, 0}, Point2{0, 1}});
  const double want_k[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
  const std::array<Point2, 3> tri{Point2{0.3, -0.2}, Point2{2.1, 0.4}, Point2{-0.5, 1.7}};
  const auto m = local_mass(tri);
  const double area = signed_area(tri[0], tri[1], tri[2]);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      worst = std::max(worst, std::abs(k[i][j] - want_k[i][j]));
      worst = std::max(worst, std::abs(m[i][j] - std::abs(area) / 12.0 * (i == j ? 2.0 : 1.0)));
    }
  }
  return {"P1 local stiffness and mass oracles", worst < 1e-14, "max deviation " + fmt(worst, 3)};
}

Check lumped_conservation() {
  double worst = 0.0;
  for (TriMesh m : {build_l_shape(), build_notched_rectangle()}) {
    for (int l = 0; l < 3; ++l, m = uniform_refine(m)) {
      const auto d = lump_mass(assemble_mass(m));
      double total = 0.0;
      for (double v : d.diag) total += v;
      worst = std::max(worst, std::abs(total - mesh_area(m)));
    }
  }
  return {"lumped mass conserves area", worst < 1e-12, "max deviation " + fmt(worst, 3)};
}

Check conformity() {
  int audited = 0;
  std::string detail;
  try {
    for (TriMesh m : {build_l_shape(), build_notched_rectangle(), build_unit_square(2)}) {
      for (int l = 0; l < 4; ++l, m = uniform_refine(m)) {
        audit_mesh(m);
        ++audited;
      }
    }
    audit_mesh(graded_refine(uniform_refine(build_l_shape()), 0, 0.6));
    ++audited;
  } catch (const std::exception& e) {
    return {"mesh conformity audits", false, e.what()};
  }
  return {"mesh conformity audits", true, std::to_string(audited) + " meshes"};
}

ReentrantCorner tilted_corner() {
  ReentrantCorner c;
  c.vertex = {1.0, 1.0};
  c.theta = 1.75 * kPi;
  c.edge_angle = 0.25 * kPi;
  c.bisector_angle = c.edge_angle + 0.5 * c.theta;
  return c;
}

std::vector<Point2> wedge_samples(const ReentrantCorner& c, int n, double lo, double hi, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> r(lo, hi), phi(0.02, c.theta - 0.02);
  std::vector<Point2> out;
  for (int i = 0; i < n; ++i) {
    const double rr = r(gen), pp = c.edge_angle + phi(gen);
    out.push_back({c.vertex.x + rr * std::cos(pp), c.vertex.y + rr * std::sin(pp)});
  }
  return out;
}

Check singular_finite_differences() {
  double worst = 0.0;
  for (const auto& c : {l_shape_corner(), tilted_corner()}) {
    for (int n : {1, 2, 3, -1}) {
      const SingularFunction s(n, c, n < 0 ? std::optional<CutoffEta>(CutoffEta{}) : std::nullopt);
      for (Point2 x : wedge_samples(c, 100, 0.01, 1.0, 11)) {
        const double h = 1e-6;
        const Vec2 fd{(s.value({x.x + h, x.y}) - s.value({x.x - h, x.y})) / (2 * h),
                      (s.value({x.x, x.y + h}) - s.value({x.x, x.y - h})) / (2 * h)};
        const Vec2 g = s.gradient(x);
        worst = std::max(worst, norm(g - fd) / std::max(norm(g), 1e-3));
      }
    }
    const SingularFunction d(-1, c, CutoffEta{});
    for (Point2 x : wedge_samples(c, 50, 0.27, 0.73, 5)) {
      const double h = 1e-4;
      const double fd = (d.value({x.x + h, x.y}) + d.value({x.x - h, x.y}) + d.value({x.x, x.y + h}) +
                         d.value({x.x, x.y - h}) - 4.0 * d.value(x)) /
                        (h * h);
      const double got = laplacian_dual(d, x);
      worst = std::max(worst, std::abs(got - fd) / std::max(1.0, std::abs(got)));
    }
  }
  return {"singular function gradient and Laplacian vs finite differences", worst <= 1e-5,
          "max relative deviation " + fmt(worst, 3)};
}

Check cg_versus_dense() {
  double worst = 0.0;
  for (const auto& m : {build_l_shape(), uniform_refine(build_l_shape())}) {
    const auto sys = apply_dirichlet(assemble_stiffness(m), assemble_load(m, [](Point2) { return 1.0; }, {}),
                                     [](Point2) { return 0.0; }, m);
    const auto x = solve_spd(sys.matrix, sys.rhs, 1e-14);
    const int n = sys.matrix.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int k = sys.matrix.row_ptr()[i]; k < sys.matrix.row_ptr()[i + 1]; ++k) {
        a(i, sys.matrix.col_idx()[k]) = sys.matrix.values()[k];
      }
    }
    const Eigen::VectorXd ref = a.ldlt().solve(Eigen::Map<const Eigen::VectorXd>(sys.rhs.data(), n));
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(x[i] - ref(i)) / ref.cwiseAbs().maxCoeff());
  }
  return {"CG agrees with dense solve on coarse meshes", worst <= 1e-9, "max relative deviation " + fmt(worst, 3)};
}

Check homogeneity_and_edges() {
  double hom = 0.0, edge = 0.0;
  for (const auto& c : {l_shape_corner(), tilted_corner()}) {
    for (int n : {1, 2, 3}) {
      const SingularFunction s(n, c);
      for (Point2 x : wedge_samples(c, 20, 0.05, 1.0, 7)) {
        for (double k : {0.1, 0.5, 3.0}) {
          const double want = std::pow(k, s.lambda()) * s.value(x);
          hom = std::max(hom, std::abs(s.value(c.vertex + k * (x - c.vertex)) - want) / std::max(1.0, std::abs(want)));
        }
      }
    }
    for (int n : {1, 2, 3, -1, -2}) {
      const SingularFunction s(n, c, n < 0 ? std::optional<CutoffEta>(CutoffEta{}) : std::nullopt);
      const Vec2 first = c.edge_angle == 0.0 ? Vec2{1.0, 0.0} : Vec2{1.0, 1.0};
      const Vec2 second = c.edge_angle == 0.0 ? Vec2{0.0, -1.0} : Vec2{1.0, 0.0};
      for (double r : {0.01, 0.3, 0.5, 0.9}) {
        const double scale = std::max(1.0, std::pow(r, s.lambda()));
        edge = std::max(edge, std::abs(s.value(c.vertex + r * first)) / scale);
        edge = std::max(edge, std::abs(s.value(c.vertex + r * second)) / scale);
      }
    }
  }
  return {"singular function homogeneity and edge vanishing", hom <= 1e-13 && edge <= 1e-13,
          "homogeneity " + fmt(hom, 3) + ", edges " + fmt(edge, 3)};
}

}  // namespace

int main() {
  std::cout << std::unitbuf;

  // 1 and 2 share one elliptic run; the recorded time covers both projections.
  {
    StudyConfig cfg;
    cfg.study = Study::elliptic_pollution;
    cfg.levels = 6;
    std::vector<Check> c1, c2;
    try {
      const auto start = Clock::now();
      const auto r = run_elliptic_pollution(cfg);
      const double secs = seconds_since(start);
      const auto checks = r.checks();
      c1 = {checks[0], runtime("elliptic study", secs, 60.0)};
      c2 = {checks[1], checks[2], runtime("elliptic study", secs, 120.0)};
      c2.push_back({"gamma per level", true, fmt(r.gammas.front(), 6) + " .. " + fmt(r.gammas.back(), 6)});
    } catch (const std::exception& e) {
      c1 = c2 = {{"completed without error", false, e.what()}};
    }
    report(1, "elliptic pollution of the standard Ritz projection", c1);
    report(2, "energy-corrected elliptic optimality", c2);
  }

  // 3 and 4 share the Table 1 run.
  {
    StudyConfig cfg;
    cfg.study = Study::table1;
    cfg.levels = 6;
    cfg.dt0 = 0.1;
    cfg.t_end = 1.0;
    std::vector<Check> c3, c4;
    try {
      const auto start = Clock::now();
      const auto r = run_table1(cfg);
      const double secs = seconds_since(start);
      auto checks = r.checks();
      c4 = {checks.back()};
      checks.pop_back();
      c3 = checks;
      c3.push_back(runtime("table1 study", secs, 1200.0));
    } catch (const std::exception& e) {
      c3 = c4 = {{"completed without error", false, e.what()}};
    }
    report(3, "parabolic convergence rates on the L-shape", c3);
    report(4, "stress-intensity coefficient convergence", c4);
  }

  report(5, "gamma search", guarded([] {
           StudyConfig cfg;
           cfg.study = Study::gamma;
           const auto start = Clock::now();
           const auto a = run_gamma(cfg);
           const double secs = seconds_since(start);
           const auto b = run_gamma(cfg);
           auto c = gamma_checks(a);
           double diff = a.levels.size() == b.levels.size() ? 0.0 : 1.0;
           for (std::size_t i = 0; i < std::min(a.levels.size(), b.levels.size()); ++i) {
             diff = std::max(diff, std::abs(a.levels[i].gamma - b.levels[i].gamma));
           }
           c.push_back({"deterministic across re-runs", diff <= 1e-8, "max difference " + fmt(diff, 3)});
           c.push_back(runtime("gamma search", secs, 300.0));
           return c;
         }));

  report(6, "explicit Euler CFL probe", guarded([] {
           StudyConfig cfg;
           cfg.study = Study::cfl_probe;
           return run_cfl_probe(cfg).checks();
         }));

  report(7, "advection-diffusion QoI on the notched rectangle", guarded([] {
           StudyConfig cfg;
           cfg.study = Study::advection_qoi;
           const auto start = Clock::now();
           const auto r = run_advection_qoi(cfg);
           const double secs = seconds_since(start);
           auto c = r.checks();
           c.push_back({"extrapolated QoI", std::isfinite(r.qoi_extrapolated),
                        fmt(r.qoi_extrapolated, 8) + " (order " + fmt(r.extrapolation_order, 3) + ")"});
           c.push_back(runtime("advection study", secs, 600.0));
           return c;
         }));

  report(8, "property suites", guarded([] {
           return std::vector<Check>{local_matrices(),         lumped_conservation(), conformity(),
                                     singular_finite_differences(), cg_versus_dense(),     homogeneity_and_edges()};
         }));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
