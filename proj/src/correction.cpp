#include "cornerheat/correction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "cornerheat/errors.hpp"
#include "cornerheat/quadrature.hpp"

namespace cornerheat {

namespace {

constexpr double kPi = std::numbers::pi;

const ReentrantCorner& corner_at(const TriMesh& mesh, int corner) {
  if (corner < 0 || corner >= static_cast<int>(mesh.corners.size())) throw Error("unknown corner index");
  return mesh.corners[static_cast<std::size_t>(corner)];
}

SegmentOptions segments_for(const TriMesh& mesh, const SingularFunction& s) {
  SegmentOptions opt = corner_segments(mesh);
  if (s.eta()) {
    opt.circles.push_back({s.corner().vertex, s.eta()->r0});
    opt.circles.push_back({s.corner().vertex, s.eta()->r1});
  }
  return opt;
}

double quad_form(const SparseMatrix& a, std::span<const double> x) {
  const auto ax = a.multiply(x);
  return dot(x, ax);
}

}  // namespace

void CorrectionConfig::validate() const {
  if (layers < 1) throw Error("correction needs at least one layer");
  if (static_cast<int>(gammas.size()) != layers) throw Error("one gamma per correction layer is required");
  for (double g : gammas) {
    if (!std::isfinite(g)) throw Error("correction parameter is not finite");
  }
  if (layers == 1 && !(gammas[0] >= 0.0 && gammas[0] < 0.5)) {
    throw Error("single-layer correction parameter must lie in [0, 1/2)");
  }
}

SparseMatrix build_correction(const TriMesh& mesh, const CorrectionConfig& cfg) {
  cfg.validate();
  corner_at(mesh, cfg.corner);
  const auto layers = corner_layers(mesh, cfg.corner, cfg.layers);
  const auto n = static_cast<int>(mesh.num_vertices());
  SparseMatrix c(n, n);
  for (std::size_t i = 0; i < layers.layers.size(); ++i) {
    if (cfg.gammas[i] == 0.0) continue;
    c = combine(1.0, c, cfg.gammas[i], assemble_stiffness(mesh, layers.layers[i]));
  }
  return c;
}

SparseMatrix modified_stiffness(const TriMesh& mesh, std::span<const CorrectionConfig> corrections) {
  SparseMatrix s = assemble_stiffness(mesh);
  for (const auto& cfg : corrections) s = combine(1.0, s, -1.0, build_correction(mesh, cfg));
  return s;
}

FieldVector modified_ritz(const TriMesh& mesh, std::span<const CorrectionConfig> corrections, const ScalarField& u,
                          const ScalarField& g, double tol) {
  const auto a = modified_stiffness(mesh, corrections);
  SegmentOptions seg = corner_segments(mesh);
  const auto r = energy_load(mesh, u, seg);
  const auto sys = apply_dirichlet(a, r, g, mesh);
  const auto x = solve_spd(sys.matrix, sys.rhs, tol);
  return expand(sys, x);
}

double singular_energy(const TriMesh& mesh, const SingularFunction& s) {
  const double lam = s.lambda();
  if (s.eta()) {
    check_dual_support(mesh, s);
    const auto& eta = *s.eta();
    // int_0^r0 of |grad (r^l sin)|^2 over the sector is (theta/2) lambda r0^(2 lambda)
    double total = 0.5 * s.corner().theta * lam * std::pow(eta.r0, 2.0 * lam);
    const auto& rule = gauss_legendre(40);
    const double w = eta.r1 - eta.r0;
    double radial = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double r = eta.r0 + w * rule.nodes[q];
      const double rl = std::pow(r, lam);
      const double dr = eta.d1(r) * rl + eta.value(r) * lam * rl / r;
      const double dphi = eta.value(r) * lam * rl / r;
      radial += w * rule.weights[q] * (dr * dr + dphi * dphi) * r;
    }
    return total + 0.5 * s.corner().theta * radial;
  }
  // |grad s|^2 = lambda^2 r^(2 lambda - 2); the domain is a signed union of the
  // triangles (c, a, b) over oriented boundary edges a -> b, and each of those
  // integrates in polar form to
  //   cross(a - c, b - a) / (2 lambda) * int_0^1 |a + t (b - a) - c|^(2 lambda - 2) dt.
  const Point2 c = s.corner().vertex;
  const auto& rule = gauss_legendre(24);
  double total = 0.0;
  for (const auto& e : mesh.boundary_edges) {
    const Point2 a = mesh.vertices[static_cast<std::size_t>(e.v[0])];
    const Point2 b = mesh.vertices[static_cast<std::size_t>(e.v[1])];
    const Vec2 d = b - a;
    const double cr = cross(a - c, d);
    if (std::abs(cr) <= 1e-14 * norm(d) * (norm(a - c) + norm(d))) continue;
    double line = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const Point2 p = a + rule.nodes[q] * d;
      line += rule.weights[q] * std::pow(distance(p, c), 2.0 * lam - 2.0);
    }
    total += cr / (2.0 * lam) * line;
  }
  return lam * lam * total;
}

EnergyDefect::EnergyDefect(const TriMesh& mesh, int corner, int layers, std::optional<CutoffEta> eta,
                           std::vector<double> outer_gammas)
    : mesh_(mesh),
      corner_(corner),
      layers_(layers),
      outer_(std::move(outer_gammas)),
      s1_(1, corner_at(mesh, corner), eta) {
  if (layers < 1) throw Error("correction needs at least one layer");
  if (static_cast<int>(outer_.size()) != layers - 1) throw Error("outer layer parameters do not match layer count");
  stiffness_ = assemble_stiffness(mesh);
  const auto cl = corner_layers(mesh, corner, layers);
  for (const auto& layer : cl.layers) layer_stiffness_.push_back(assemble_stiffness(mesh, layer));
  load_ = energy_load(mesh, s1_.field(), segments_for(mesh, s1_));
  a11_ = cornerheat::singular_energy(mesh, s1_);
  h_ = mesh.h;
  dofs_ = split_dofs(mesh);
  lift_.assign(mesh.num_vertices(), 0.0);
  for (int v : dofs_.constrained) lift_[static_cast<std::size_t>(v)] = s1_.value(mesh.vertices[static_cast<std::size_t>(v)]);
}

double EnergyDefect::operator()(double gamma) {
  SparseMatrix c = combine(gamma, layer_stiffness_[0], 0.0, layer_stiffness_[0]);
  for (std::size_t i = 1; i < layer_stiffness_.size(); ++i) c = combine(1.0, c, outer_[i - 1], layer_stiffness_[i]);
  const SparseMatrix a = combine(1.0, stiffness_, -1.0, c);

  const auto a_lift = a.multiply(lift_);
  FieldVector rhs(dofs_.free.size());
  for (std::size_t k = 0; k < rhs.size(); ++k) {
    const auto v = static_cast<std::size_t>(dofs_.free[k]);
    rhs[k] = load_[v] - a_lift[v];
  }
  const auto reduced = a.extract(dofs_.free, dofs_.free);
  if (warm_.size() != rhs.size()) warm_.assign(rhs.size(), 0.0);
  warm_ = solve_spd(reduced, rhs, 1e-12, 20000, nullptr, warm_);

  last_ = lift_;
  for (std::size_t k = 0; k < warm_.size(); ++k) last_[static_cast<std::size_t>(dofs_.free[k])] = warm_[k];
  return a11_ - 2.0 * dot(load_, last_) + quad_form(stiffness_, last_) - quad_form(c, last_);
}

std::string GammaSearchReport::to_json() const {
  nlohmann::ordered_json j;
  j["levels"] = nlohmann::ordered_json::array();
  for (const auto& l : levels) {
    nlohmann::ordered_json e;
    e["level"] = l.level;
    e["h"] = l.h;
    e["gamma"] = l.gamma;
    e["defect"] = l.defect;
    e["iters"] = l.iterations;
    j["levels"].push_back(e);
  }
  j["converged"] = converged;
  return j.dump(2);
}

namespace {

struct RootResult {
  double x;
  double fx;
  int iterations;
  bool ok;
};

// Secant steps kept inside a sign-changing bracket [lo, hi] with g(lo) > 0 > g(hi);
// falls back to bisection when the secant leaves the bracket or stalls.
RootResult bracketed_secant(EnergyDefect& g, double lo, double g_lo, double hi, double g_hi, double x0, double g0,
                            double x1, double g1, double tol, int max_iter, int used) {
  int it = used;
  double width_before = hi - lo;
  while (it < max_iter) {
    if (std::abs(g1) <= tol && (g1 == g0 || std::abs(x1 - x0) <= 1e-10)) return {x1, g1, it, true};
    double x2 = x1;
    if (g1 != g0) x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
    const bool outside = !(x2 > lo && x2 < hi) || g1 == g0;
    const bool stalled = (hi - lo) > 0.5 * width_before;
    if (outside || (it - used >= 2 && stalled && std::abs(g1) > tol)) {
      x2 = 0.5 * (lo + hi);
      width_before = hi - lo;
    }
    const double g2 = g(x2);
    ++it;
    if (g2 > 0.0) {
      lo = x2;
      g_lo = g2;
    } else {
      hi = x2;
      g_hi = g2;
    }
    x0 = x1;
    g0 = g1;
    x1 = x2;
    g1 = g2;
    if (hi - lo < 1e-15) return {x1, g1, it, std::abs(g1) <= tol};
  }
  (void)g_lo;
  (void)g_hi;
  return {x1, g1, it, std::abs(g1) <= tol};
}

}  // namespace

GammaSearchReport find_gamma(std::span<const TriMesh> hierarchy, const GammaSearchOptions& options) {
  if (hierarchy.size() < 3) throw Error("gamma search needs at least three mesh levels");
  if (!(options.tol > 0.0)) throw Error("gamma search tolerance must be positive");
  GammaSearchReport report;
  double previous = -1.0;
  for (std::size_t level = 0; level < hierarchy.size(); ++level) {
    const TriMesh& mesh = hierarchy[level];
    EnergyDefect g(mesh, options.corner, options.layers, options.eta, options.outer_gammas);
    const double g_zero = g(0.0);
    if (!(g_zero > 0.0)) throw SearchError("energy defect at gamma = 0 is not positive");
    const double tol = mesh.h * mesh.h * std::abs(g_zero) * 1e-2;
    int evals = 1;

    double lo = 0.0;
    double g_lo = g_zero;
    double hi = 0.5;
    double g_hi = 0.0;
    double x0 = 0.0;
    double gx0 = g_zero;
    double x1 = 0.0;
    double gx1 = 0.0;
    if (previous < 0.0) {
      g_hi = g(hi);
      ++evals;
      if (g_hi > 0.0) {
        std::ostringstream msg;
        msg << "energy defect has no sign change on (0, 1/2) at level " << mesh.level << " (g(0) = " << g_zero
            << ", g(1/2) = " << g_hi << ")";
        throw SearchError(msg.str());
      }
      x1 = hi;
      gx1 = g_hi;
    } else {
      // Start from the previous root and walk outwards until the sign changes.
      x1 = previous;
      gx1 = g(x1);
      ++evals;
      double step = 1e-3;
      double x = x1;
      double gx = gx1;
      bool found = false;
      while (!found) {
        const double next = gx > 0.0 ? std::min(x + step, 0.5) : std::max(x - step, 0.0);
        const double gn = next == 0.0 ? g_zero : g(next);
        if (next != 0.0) ++evals;
        if ((gx > 0.0) != (gn > 0.0)) {
          lo = gx > 0.0 ? x : next;
          g_lo = gx > 0.0 ? gx : gn;
          hi = gx > 0.0 ? next : x;
          g_hi = gx > 0.0 ? gn : gx;
          x0 = next;
          gx0 = gn;
          x1 = x;
          gx1 = gx;
          found = true;
        } else if (next == 0.5 || next == 0.0) {
          throw SearchError("energy defect has no sign change on (0, 1/2)");
        } else {
          x = next;
          gx = gn;
          step *= 4.0;
        }
      }
    }
    const auto root = bracketed_secant(g, lo, g_lo, hi, g_hi, x0, gx0, x1, gx1, tol, options.max_iterations, evals);
    if (!(root.x > 0.0 && root.x < 0.5)) throw SearchError("gamma search left the admissible interval (0, 1/2)");
    report.levels.push_back({mesh.level, mesh.h, root.x, root.fx, root.iterations, tol});
    report.converged = root.ok;
    if (previous >= 0.0 && std::abs(root.x - previous) <= 10.0 * options.tol) break;
    previous = root.x;
  }
  return report;
}

void check_dual_support(const TriMesh& mesh, const SingularFunction& dual) {
  if (!dual.eta()) throw Error("extraction needs a dual function with a cutoff");
  const auto& c = dual.corner();
  const double r1 = dual.eta()->r1;
  const Vec2 e0{std::cos(c.edge_angle), std::sin(c.edge_angle)};
  const Vec2 e1{std::cos(c.edge_angle + c.theta), std::sin(c.edge_angle + c.theta)};
  const auto on_ray = [&](Point2 p, Vec2 dir) {
    const Vec2 d = p - c.vertex;
    return std::abs(cross(dir, d)) <= 1e-12 * (1.0 + norm(d)) && dot(dir, d) >= -1e-12;
  };
  for (const auto& e : mesh.boundary_edges) {
    const Point2 a = mesh.vertices[static_cast<std::size_t>(e.v[0])];
    const Point2 b = mesh.vertices[static_cast<std::size_t>(e.v[1])];
    // closest distance from the corner to the segment
    const Vec2 d = b - a;
    const double t = std::clamp(dot(c.vertex - a, d) / dot(d, d), 0.0, 1.0);
    if (distance(a + t * d, c.vertex) >= r1) continue;
    const bool along0 = on_ray(a, e0) && on_ray(b, e0);
    const bool along1 = on_ray(a, e1) && on_ray(b, e1);
    if (!along0 && !along1) {
      std::ostringstream msg;
      msg << "cutoff disc of radius " << r1 << " around (" << c.vertex.x << ", " << c.vertex.y
          << ") is not contained in the domain";
      throw DomainError(msg.str());
    }
  }
}

namespace {

// -1/(n pi) [ int (f - d_h) s_{-n} + u_h Delta s_{-n} ] for a dual of index -n
double extraction_integral(const TriMesh& mesh, std::span<const double> u_h, std::span<const double> d_h,
                           const ScalarField& f, const SingularFunction& dual) {
  if (dual.index() >= 0) throw Error("extraction needs a dual singular function (negative index)");
  check_dual_support(mesh, dual);
  if (u_h.size() != mesh.num_vertices()) throw Error("field size does not match the mesh");
  const auto& c = dual.corner();
  const auto& eta = *dual.eta();
  IntegrationOptions opt;
  opt.singular_points.push_back(c.vertex);
  opt.circles.push_back({c.vertex, eta.r0});
  opt.circles.push_back({c.vertex, eta.r1});
  opt.support = Circle{c.vertex, eta.r1};

  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto p = mesh.corners_of(t);
    const auto& tri = mesh.triangles[t];
    const std::array<double, 3> u{u_h[static_cast<std::size_t>(tri[0])], u_h[static_cast<std::size_t>(tri[1])],
                                  u_h[static_cast<std::size_t>(tri[2])]};
    std::array<double, 3> d{};
    if (!d_h.empty()) d = {d_h[static_cast<std::size_t>(tri[0])], d_h[static_cast<std::size_t>(tri[1])],
                           d_h[static_cast<std::size_t>(tri[2])]};
    for_each_quadrature_point(p, opt, [&](Point2 x, const std::array<double, 3>& b, double w) {
      const double r = distance(x, c.vertex);
      if (r >= eta.r1) return;
      double src = f ? f(x) : 0.0;
      src -= b[0] * d[0] + b[1] * d[1] + b[2] * d[2];
      double val = src * dual.value(x);
      if (r > eta.r0) val += (b[0] * u[0] + b[1] * u[1] + b[2] * u[2]) * dual.laplacian(x);
      total += w * val;
    });
  }
  return total / (dual.index() * kPi);
}

}  // namespace

double extract_k1_elliptic(const TriMesh& mesh, std::span<const double> u_h, const ScalarField& f,
                           const SingularFunction& dual) {
  return extraction_integral(mesh, u_h, {}, f, dual);
}

double extract_k1_parabolic(const TriMesh& mesh, std::span<const double> u_last, std::span<const double> u_prev,
                            double dt, const ScalarField& f_at_t, const SingularFunction& dual) {
  if (!(dt > 0.0)) throw Error("time step must be positive");
  if (u_prev.size() != u_last.size()) throw Error("time levels have different sizes");
  FieldVector diff(u_last.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = (u_last[i] - u_prev[i]) / dt;
  return extraction_integral(mesh, u_last, diff, f_at_t, dual);
}

double PostProcessed::value(const TriMesh& mesh, std::size_t vertex) const {
  return field[vertex] + k1h * s1.value(mesh.vertices[vertex]);
}

ScalarField PostProcessed::residual_target(const ScalarField& u_exact) const {
  return [u_exact, k = k1h, s = s1](Point2 x) { return u_exact(x) - k * s.value(x); };
}

PostProcessed post_process(std::span<const double> u_h, std::span<const double> s1h, double k1h,
                           const SingularFunction& s1) {
  if (u_h.size() != s1h.size()) throw Error("field sizes differ");
  PostProcessed out{FieldVector(u_h.size()), k1h, s1};
  for (std::size_t i = 0; i < u_h.size(); ++i) out.field[i] = u_h[i] - k1h * s1h[i];
  return out;
}

PostProcessed post_process(const TriMesh& mesh, std::span<const CorrectionConfig> corrections,
                           std::span<const double> u_h, double k1h, const SingularFunction& s1) {
  const auto field = s1.field();
  const auto s1h = modified_ritz(mesh, corrections, field, field);
  return post_process(u_h, s1h, k1h, s1);
}

}  // namespace cornerheat
