#include "cornerheat/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "cornerheat/errors.hpp"
#include "cornerheat/fem.hpp"
#include "cornerheat/parabolic.hpp"
#include "cornerheat/singular.hpp"
#include "json.hpp"
#include "toml.hpp"

#include <Eigen/Dense>

namespace cornerheat {

namespace {

constexpr double kPi = std::numbers::pi;
using Json = nlohmann::ordered_json;

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

Check band(const std::string& name, double value, double lo, double hi) {
  const bool ok = std::isfinite(value) && value >= lo && value <= hi;
  return {name, ok, fmt(value) + " in [" + fmt(lo) + ", " + fmt(hi) + "]"};
}

Check at_most(const std::string& name, double value, double hi) {
  const bool ok = std::isfinite(value) && value <= hi;
  return {name, ok, fmt(value) + " <= " + fmt(hi)};
}

double default_alpha() { return 1.0 - kPi / l_shape_corner().theta; }

// Per-level gammas: the explicit value everywhere, or the level roots of the
// energy-defect search (the last root repeated if the search stopped early).
std::vector<double> level_gammas(const StudyConfig& cfg, std::span<const TriMesh> meshes, int corner,
                                 std::optional<CutoffEta> eta) {
  if (cfg.gamma) return std::vector<double>(meshes.size(), *cfg.gamma);
  GammaSearchOptions opt;
  opt.corner = corner;
  opt.eta = eta;
  const auto report = find_gamma(meshes, opt);
  std::vector<double> g;
  for (const auto& l : report.levels) g.push_back(l.gamma);
  while (g.size() < meshes.size()) g.push_back(g.back());
  return g;
}

// Smallest substep count m such that dt_nominal(L) / m <= 0.9 dt_max(L) on every level.
int auto_substeps(std::span<const TriMesh> meshes, double dt0) {
  int m = 1;
  for (std::size_t l = 0; l < meshes.size(); ++l) {
    const auto s = assemble_stiffness(meshes[l]);
    const auto lumped = lump_mass(assemble_mass(meshes[l]));
    const auto dofs = split_dofs(meshes[l]);
    const double dt_max = cfl_max_dt(lumped, s, dofs.free);
    const double nominal = dt0 / std::pow(4.0, static_cast<double>(l));
    m = std::max(m, static_cast<int>(std::ceil(nominal / (0.9 * dt_max) - 1e-12)));
  }
  return m;
}

long steps_for(double t_end, double dt) {
  const long n = std::lround(t_end / dt);
  if (n < 1 || std::abs(static_cast<double>(n) * dt - t_end) > 1e-9 * t_end) {
    throw Error("final time is not a whole number of time steps");
  }
  return n;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + p.string());
  f << content;
}

double nodal_max(std::span<const double> u) {
  double m = 0.0;
  for (double v : u) m = std::max(m, std::abs(v));
  return m;
}

// Peak of a least-squares quadratic through the two vertex rings around the
// nodal maximum. The nodal maximum itself jumps between vertices as the mesh
// is refined, which is too noisy to extrapolate from; the reconstructed peak
// is not. Falls back to the nodal value if the stationary point leaves the
// patch or the fit is not a proper maximum.
double reconstructed_peak(const TriMesh& mesh, std::span<const double> u) {
  std::size_t top = 0;
  for (std::size_t i = 1; i < u.size(); ++i) {
    if (std::abs(u[i]) > std::abs(u[top])) top = i;
  }
  const double sign = u[top] < 0.0 ? -1.0 : 1.0;
  std::vector<char> in(u.size(), 0);
  in[top] = 1;
  for (int ring = 0; ring < 2; ++ring) {
    std::vector<char> next = in;
    for (const auto& t : mesh.triangles) {
      if (in[t[0]] || in[t[1]] || in[t[2]]) next[t[0]] = next[t[1]] = next[t[2]] = 1;
    }
    in = std::move(next);
  }
  const Point2 c = mesh.vertices[top];
  std::vector<std::size_t> ids;
  double reach = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!in[i]) continue;
    ids.push_back(i);
    reach = std::max(reach, distance(mesh.vertices[i], c));
  }
  const double fallback = std::abs(u[top]);
  if (ids.size() < 6) return fallback;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(ids.size()), 6);
  Eigen::VectorXd b(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const double x = mesh.vertices[ids[k]].x - c.x;
    const double y = mesh.vertices[ids[k]].y - c.y;
    const auto r = static_cast<Eigen::Index>(k);
    a.row(r) << 1.0, x, y, x * x, x * y, y * y;
    b(r) = sign * u[ids[k]];
  }
  const Eigen::VectorXd q = a.colPivHouseholderQr().solve(b);
  Eigen::Matrix2d hess;
  hess << 2.0 * q(3), q(4), q(4), 2.0 * q(5);
  const Eigen::Vector2d grad(q(1), q(2));
  if (!(hess.determinant() > 0.0 && hess.trace() < 0.0)) return fallback;
  const Eigen::Vector2d z = -hess.inverse() * grad;
  if (!(z.norm() < 0.5 * reach)) return fallback;
  return std::max(fallback, q(0) + grad.dot(z) + 0.5 * z.dot(hess * z));
}

}  // namespace

Study parse_study(const std::string& name) {
  if (name == "table1") return Study::table1;
  if (name == "gamma") return Study::gamma;
  if (name == "advection_qoi") return Study::advection_qoi;
  if (name == "cfl_probe") return Study::cfl_probe;
  if (name == "elliptic_pollution") return Study::elliptic_pollution;
  throw Error("unknown study '" + name + "'");
}

std::string study_name(Study s) {
  switch (s) {
    case Study::table1: return "table1";
    case Study::gamma: return "gamma";
    case Study::advection_qoi: return "advection_qoi";
    case Study::cfl_probe: return "cfl_probe";
    case Study::elliptic_pollution: return "elliptic_pollution";
  }
  return "";
}

int StudyConfig::resolved_levels() const {
  if (levels > 0) return levels;
  switch (study) {
    case Study::advection_qoi: return 5;
    case Study::cfl_probe: return 3;
    default: return 6;
  }
}

double StudyConfig::resolved_dt0() const {
  if (dt0 > 0.0) return dt0;
  return study == Study::advection_qoi ? 0.02 : 0.1;
}

std::optional<double> parse_gamma_option(const std::string& text) {
  if (text.empty() || text == "auto") return std::nullopt;
  std::size_t used = 0;
  double g = 0.0;
  try {
    g = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw Error("gamma must be 'auto' or a number, got '" + text + "'");
  return g;
}

namespace {

void apply_table(const toml::table& root, StudyConfig& cfg) {
  const auto* tbl = root["study"].as_table();
  if (tbl == nullptr) throw Error("config has no [study] table");
  for (const auto& [key, node] : *tbl) {
    std::string k(key.str());
    std::replace(k.begin(), k.end(), '-', '_');
    const auto num = [&]() {
      if (auto v = node.value<double>()) return *v;
      throw Error("config key '" + k + "' must be a number");
    };
    const auto str = [&]() {
      if (auto v = node.value<std::string>()) return *v;
      throw Error("config key '" + k + "' must be a string");
    };
    if (k == "name" || k == "study") {
      cfg.study = parse_study(str());
    } else if (k == "levels") {
      cfg.levels = static_cast<int>(num());
    } else if (k == "dt0") {
      cfg.dt0 = num();
    } else if (k == "t_end") {
      cfg.t_end = num();
    } else if (k == "alpha") {
      cfg.alpha = num();
    } else if (k == "gamma") {
      cfg.gamma = node.is_string() ? parse_gamma_option(str()) : std::optional<double>(num());
    } else if (k == "out") {
      cfg.out = str();
    } else if (k == "seed") {
      cfg.seed = static_cast<unsigned>(num());
    } else if (k == "substeps") {
      cfg.substeps = static_cast<int>(num());
    } else if (k == "grading_mu" || k == "mu") {
      cfg.grading_mu = num();
    } else if (k == "zero_source") {
      const auto b = node.value<bool>();
      if (!b) throw Error("config key 'zero_source' must be a boolean");
      cfg.zero_source = *b;
    } else {
      throw Error("config key '" + k + "' is not recognised");
    }
  }
}

}  // namespace

void load_config(std::string_view toml_text, StudyConfig& cfg) {
  try {
    apply_table(toml::parse(toml_text), cfg);
  } catch (const toml::parse_error& e) {
    throw Error("config: " + std::string(e.description()));
  }
}

void load_config_file(const std::string& path, StudyConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::stringstream text;
  text << in.rdbuf();
  try {
    load_config(text.str(), cfg);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

void StudyConfig::validate() const {
  const int l = resolved_levels();
  if (study == Study::cfl_probe ? l < 2 : l < 3) throw Error("study needs more levels");
  if (l > 9) throw Error("more than 9 levels is not supported");
  if (!(t_end > 0.0)) throw Error("t_end must be positive");
  if (dt0 < 0.0) throw Error("dt0 must be positive");
  if (alpha && !(*alpha >= 0.0 && *alpha < 1.0)) throw Error("alpha must lie in [0, 1)");
  if (gamma && !(*gamma >= 0.0 && *gamma < 0.5)) throw Error("gamma must lie in [0, 1/2)");
  if (substeps < 0) throw Error("substeps must be non-negative");
  if (!(grading_mu > 0.0 && grading_mu <= 1.0)) throw Error("grading exponent must lie in (0, 1]");
}

void ConvergenceRecord::fill_rates() {
  const auto rate = [&](auto member_err, auto member_rate) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i].*member_rate = std::nullopt;
      if (i == 0) continue;
      const auto& a = rows[i - 1].*member_err;
      const auto& b = rows[i].*member_err;
      if (a && b && *a > 0.0 && *b > 0.0) rows[i].*member_rate = std::log2(*a / *b);
    }
  };
  rate(&ConvergenceRow::err_l2, &ConvergenceRow::rate_l2);
  rate(&ConvergenceRow::err_weighted, &ConvergenceRow::rate_weighted);
  rate(&ConvergenceRow::err_post, &ConvergenceRow::rate_post);
}

void ConvergenceRecord::write_csv(std::ostream& out, bool include_wall) const {
  out << kCsvHeader << '\n';
  const auto opt = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  const auto old = out.precision(10);
  for (const auto& r : rows) {
    out << r.level << ',' << r.h << ',' << r.dofs;
    opt(r.dt);
    opt(r.err_l2);
    opt(r.rate_l2);
    opt(r.err_weighted);
    opt(r.rate_weighted);
    opt(r.err_post);
    opt(r.rate_post);
    opt(r.k1h);
    out << ',';
    if (include_wall) out << r.wall_seconds;
    out << '\n';
  }
  out.precision(old);
}

std::string ConvergenceRecord::to_csv(bool include_wall) const {
  std::ostringstream s;
  write_csv(s, include_wall);
  return s.str();
}

std::vector<double> compute_eoc(std::span<const double> errors) {
  for (double e : errors) {
    if (!(e > 0.0)) throw Error("convergence rates need positive errors");
  }
  std::vector<double> r;
  for (std::size_t i = 1; i < errors.size(); ++i) r.push_back(std::log2(errors[i - 1] / errors[i]));
  return r;
}

double eoc_fit(std::span<const double> errors) {
  if (errors.size() < 2) throw Error("a rate fit needs at least two errors");
  for (double e : errors) {
    if (!(e > 0.0)) throw Error("convergence rates need positive errors");
  }
  const double n = static_cast<double>(errors.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double x = static_cast<double>(i);
    const double y = -std::log2(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<TriMesh> l_shape_hierarchy(int levels) {
  if (levels < 1) throw Error("hierarchy needs at least one level");
  std::vector<TriMesh> h{build_l_shape()};
  for (int l = 1; l < levels; ++l) h.push_back(uniform_refine(h.back()));
  return h;
}

// table1 study ---------------------------------------------------------------

Table1Result run_table1(const StudyConfig& cfg) {
  cfg.validate();
  const int levels = cfg.resolved_levels();
  const double dt0 = cfg.resolved_dt0();
  const double alpha = cfg.alpha.value_or(default_alpha());
  const double t_end = cfg.t_end;
  const auto meshes = l_shape_hierarchy(levels);
  const Table1Solution sol;
  const auto corner = l_shape_corner();
  const SingularFunction s1(1, corner);
  const SingularFunction dual(-1, corner, CutoffEta{});

  Table1Result res;
  res.gammas = level_gammas(cfg, meshes, 0, std::nullopt);
  res.substeps = cfg.substeps > 0 ? cfg.substeps : auto_substeps(meshes, dt0);
  res.k1_exact = sol.k1(t_end);

  const ScalarField u_end = [&](Point2 x) { return sol.u(t_end, x); };
  const ScalarField f_end = [&](Point2 x) { return sol.f(t_end, x); };

  for (int l = 0; l < levels; ++l) {
    const TriMesh& mesh = meshes[static_cast<std::size_t>(l)];
    const double dt = dt0 / std::pow(4.0, l) / res.substeps;
    const TimeGrid grid(t_end, steps_for(t_end, dt));
    const auto integ = corner_integration(mesh);

    ParabolicProblem prob;
    prob.mesh = &mesh;
    prob.g = [&](double t, Point2 x) { return sol.u(t, x); };
    prob.separable = {
        {[](double t) { return std::cos(t); }, assemble_load(mesh, sol.mode(1).field(), integ)},
        {[](double t) { return 2.0 * std::cos(2.0 * t); }, assemble_load(mesh, sol.mode(2).field(), integ)},
        {[](double t) { return -3.0 * std::cos(3.0 * t); }, assemble_load(mesh, sol.mode(3).field(), integ)},
    };
    SchemeConfig scheme;

    const auto fill = [&](const RunResult& run, ConvergenceRow& row, bool post, std::span<const CorrectionConfig> corr) {
      row.level = mesh.level;
      row.h = mesh.h;
      row.dofs = static_cast<long>(split_dofs(mesh).free.size());
      row.dt = grid.dt();
      row.err_l2 = error_norm(mesh, run.state, u_end, {NormKind::l2}, integ);
      row.err_weighted = error_norm(mesh, run.state, u_end, {NormKind::weighted_l2, alpha, 0, 0.0}, integ);
      const double k1h = extract_k1_parabolic(mesh, run.state, run.previous, grid.dt(), f_end, dual);
      row.k1h = k1h;
      if (post) {
        const auto pp = post_process(mesh, corr, run.state, k1h, s1);
        row.err_post = error_norm(mesh, pp.field, pp.residual_target(u_end), {NormKind::l2}, integ);
      }
      row.wall_seconds = run.wall_seconds;
    };

    ConvergenceRow standard;
    fill(run(prob, scheme, grid), standard, false, {});
    res.standard.rows.push_back(standard);

    prob.corrections = {CorrectionConfig{0, 1, {res.gammas[static_cast<std::size_t>(l)]}}};
    ConvergenceRow corrected;
    fill(run(prob, scheme, grid), corrected, true, prob.corrections);
    res.corrected.rows.push_back(corrected);
    res.k1_errors.push_back(std::abs(res.k1_exact - *corrected.k1h));
  }
  res.standard.fill_rates();
  res.corrected.fill_rates();
  if (levels >= 4) {
    res.k1_eoc = eoc_fit(std::span<const double>(res.k1_errors).subspan(2));
  }
  return res;
}

std::vector<Check> Table1Result::checks() const {
  std::vector<Check> c;
  const std::size_t n = standard.rows.size();
  if (n >= 5) {
    const auto& s0 = standard.rows[n - 2];
    const auto& s1 = standard.rows[n - 1];
    const auto& c0 = corrected.rows[n - 2];
    const auto& c1 = corrected.rows[n - 1];
    const auto r = [](const std::optional<double>& v) { return v.value_or(std::nan("")); };
    c.push_back(band("standard L2 rate, level " + std::to_string(s0.level), r(s0.rate_l2), 1.23, 1.53));
    c.push_back(band("standard L2 rate, level " + std::to_string(s1.level), r(s1.rate_l2), 1.21, 1.51));
    c.push_back(band("standard weighted rate, level " + std::to_string(s0.level), r(s0.rate_weighted), 1.27, 1.57));
    c.push_back(band("standard weighted rate, level " + std::to_string(s1.level), r(s1.rate_weighted), 1.23, 1.53));
    c.push_back(band("corrected weighted rate, level " + std::to_string(c0.level), r(c0.rate_weighted), 1.89, 2.19));
    c.push_back(band("corrected weighted rate, level " + std::to_string(c1.level), r(c1.rate_weighted), 1.87, 2.17));
    c.push_back(band("post-processed L2 rate, level " + std::to_string(c0.level), r(c0.rate_post), 1.92, 2.32));
    c.push_back(band("post-processed L2 rate, level " + std::to_string(c1.level), r(c1.rate_post), 1.92, 2.32));
  }
  if (n >= 4) c.push_back(band("k1 error rate, levels 3.." + std::to_string(n), k1_eoc, 1.8, 2.2));
  return c;
}

// Elliptic pollution ----------------------------------------------------------

EllipticResult run_elliptic_pollution(const StudyConfig& cfg) {
  cfg.validate();
  const int levels = cfg.resolved_levels();
  const double alpha = cfg.alpha.value_or(default_alpha());
  const auto meshes = l_shape_hierarchy(levels);
  const auto corner = l_shape_corner();
  const SingularFunction s1(1, corner);
  const SingularFunction dual(-1, corner, CutoffEta{});
  const auto u = s1.field();

  EllipticResult res;
  res.gammas = level_gammas(cfg, meshes, 0, std::nullopt);
  for (int l = 0; l < levels; ++l) {
    const TriMesh& mesh = meshes[static_cast<std::size_t>(l)];
    const auto integ = corner_integration(mesh);
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<CorrectionConfig> corr;
      if (pass == 1) corr.push_back({0, 1, {res.gammas[static_cast<std::size_t>(l)]}});
      const auto start = std::chrono::steady_clock::now();
      const auto uh = modified_ritz(mesh, corr, u, u);
      ConvergenceRow row;
      row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      row.level = mesh.level;
      row.h = mesh.h;
      row.dofs = static_cast<long>(split_dofs(mesh).free.size());
      row.err_l2 = error_norm(mesh, uh, u, {NormKind::l2}, integ);
      row.err_weighted = error_norm(mesh, uh, u, {NormKind::weighted_l2, alpha, 0, 0.0}, integ);
      row.err_post = error_norm(mesh, uh, u, {NormKind::l2, 0.0, 0, 0.25}, integ);
      row.k1h = extract_k1_elliptic(mesh, uh, {}, dual);
      (pass == 0 ? res.standard : res.corrected).rows.push_back(row);
    }
  }
  res.standard.fill_rates();
  res.corrected.fill_rates();
  return res;
}

std::vector<Check> EllipticResult::checks() const {
  const auto& s = standard.rows.back();
  const auto& c = corrected.rows.back();
  const auto r = [](const std::optional<double>& v) { return v.value_or(std::nan("")); };
  return {at_most("standard weighted rate (pollution)", r(s.rate_weighted), 1.5),
          band("corrected weighted rate", r(c.rate_weighted), 1.9, 2.1),
          band("corrected L2 rate away from the corner", r(c.rate_post), 1.85, 2.15)};
}

// Gamma -----------------------------------------------------------------------

GammaSearchReport run_gamma(const StudyConfig& cfg) {
  cfg.validate();
  const auto meshes = l_shape_hierarchy(cfg.resolved_levels());
  GammaSearchOptions opt;
  return find_gamma(meshes, opt);
}

std::vector<Check> gamma_checks(const GammaSearchReport& report) {
  std::vector<Check> c;
  c.push_back({"search converged", report.converged, report.converged ? "true" : "false"});
  const double g = report.gamma();
  c.push_back({"gamma in (0, 1/2)", g > 0.0 && g < 0.5, fmt(g, 10)});
  std::vector<double> inc;
  for (std::size_t i = 1; i < report.levels.size(); ++i) {
    inc.push_back(std::abs(report.levels[i].gamma - report.levels[i - 1].gamma));
  }
  bool decreasing = inc.size() >= 2;
  const std::size_t first = inc.size() >= 3 ? inc.size() - 3 : 0;
  std::string detail;
  for (std::size_t i = first; i < inc.size(); ++i) {
    detail += (i > first ? ", " : "") + fmt(inc[i], 3);
    if (i > first && !(inc[i] < inc[i - 1])) decreasing = false;
  }
  c.push_back({"level increments strictly decreasing", decreasing, detail});
  return c;
}

// Advection QoI ---------------------------------------------------------------

AdvectionResult run_advection_qoi(const StudyConfig& cfg) {
  cfg.validate();
  const int levels = cfg.resolved_levels();
  const double dt0 = cfg.resolved_dt0();
  const double t_end = cfg.t_end;
  std::vector<TriMesh> meshes{build_notched_rectangle()};
  for (int l = 1; l < levels; ++l) meshes.push_back(uniform_refine(meshes.back()));
  const auto& corners = meshes.front().corners;

  // The optimal parameter depends only on the element patch at a corner, so
  // each corner is searched on its own two-ring neighbourhood (harmonic s1,
  // Dirichlet data everywhere); congruent corners share the result.
  std::vector<std::vector<double>> gammas(corners.size());
  std::map<long, std::size_t> by_angle;
  for (std::size_t c = 0; c < corners.size(); ++c) {
    const long key = std::lround(corners[c].theta * 1e8);
    const auto it = by_angle.find(key);
    if (it != by_angle.end()) {
      gammas[c] = gammas[it->second];
      continue;
    }
    std::vector<TriMesh> local{corner_neighbourhood(meshes.front(), static_cast<int>(c), 2)};
    for (int l = 1; l < levels; ++l) local.push_back(uniform_refine(local.back()));
    gammas[c] = level_gammas(cfg, local, 0, std::nullopt);
    by_angle[key] = c;
  }

  AdvectionResult res;
  res.zero_source = cfg.zero_source;
  res.substeps = cfg.substeps > 0 ? cfg.substeps : auto_substeps(meshes, dt0);
  for (const auto& g : gammas) res.gammas_by_corner.push_back(g.back());

  std::vector<double> q_std, q_cor, peaks;
  for (int l = 0; l < levels; ++l) {
    const TriMesh& mesh = meshes[static_cast<std::size_t>(l)];
    const double dt = dt0 / std::pow(4.0, l) / res.substeps;
    const TimeGrid grid(t_end, steps_for(t_end, dt));
    ParabolicProblem prob;
    prob.mesh = &mesh;
    prob.advection = {1.0, 1.0};
    if (!cfg.zero_source) {
      prob.separable = {{[](double t) { return std::sin(kPi * t); },
                         assemble_load(mesh, ScalarField(advection_qoi_shape), IntegrationOptions{})}};
    }
    SchemeConfig scheme;
    AdvectionLevel row;
    row.level = mesh.level;
    row.h = mesh.h;
    row.dofs = static_cast<long>(split_dofs(mesh).free.size());
    row.dt = grid.dt();
    row.qoi_standard = nodal_max(run(prob, scheme, grid).state);
    for (std::size_t c = 0; c < corners.size(); ++c) {
      prob.corrections.push_back({static_cast<int>(c), 1, {gammas[c][static_cast<std::size_t>(l)]}});
    }
    const auto u = run(prob, scheme, grid).state;
    row.qoi_corrected = nodal_max(u);
    row.peak_corrected = reconstructed_peak(mesh, u);
    res.levels.push_back(row);
    q_std.push_back(row.qoi_standard);
    q_cor.push_back(row.qoi_corrected);
    peaks.push_back(row.peak_corrected);
  }

  if (cfg.zero_source) return res;
  // Richardson on the reconstructed peaks of the three finest corrected runs,
  // fitting order and limit together.
  const std::size_t n = peaks.size();
  const double d1 = peaks[n - 2] - peaks[n - 3];
  const double d2 = peaks[n - 1] - peaks[n - 2];
  if (!(d1 / d2 > 1.0)) {
    res.qoi_extrapolated = std::nan("");
    res.extrapolation_order = std::nan("");
    res.eoc_standard = res.eoc_corrected = std::nan("");
    return res;
  }
  const double p = std::log2(d1 / d2);
  res.extrapolation_order = p;
  res.qoi_extrapolated = peaks[n - 1] + d2 / (std::pow(2.0, p) - 1.0);
  std::vector<double> e_std, e_cor;
  for (std::size_t l = 0; l + 1 < n; ++l) {
    e_std.push_back(std::abs(res.qoi_extrapolated - q_std[l]));
    e_cor.push_back(std::abs(res.qoi_extrapolated - q_cor[l]));
  }
  res.eoc_standard = eoc_fit(e_std);
  res.eoc_corrected = eoc_fit(e_cor);
  return res;
}

std::vector<Check> AdvectionResult::checks() const {
  if (zero_source) {
    bool zero = true;
    for (const auto& l : levels) zero = zero && l.qoi_standard == 0.0 && l.qoi_corrected == 0.0;
    return {{"zero source gives zero QoI", zero, zero ? "all zero" : "nonzero QoI"}};
  }
  return {{"corrected QoI rate exceeds standard", eoc_corrected > eoc_standard,
           fmt(eoc_corrected) + " > " + fmt(eoc_standard)},
          band("corrected QoI rate", eoc_corrected, 1.5, 2.2)};
}

std::string AdvectionResult::to_json() const {
  Json j;
  j["levels"] = Json::array();
  for (const auto& l : levels) {
    j["levels"].push_back({{"level", l.level},
                           {"h", l.h},
                           {"dofs", l.dofs},
                           {"dt", l.dt},
                           {"qoi_standard", l.qoi_standard},
                           {"qoi_corrected", l.qoi_corrected},
                           {"peak_corrected", l.peak_corrected}});
  }
  j["gammas_by_corner"] = gammas_by_corner;
  j["substeps"] = substeps;
  if (!zero_source) {
    j["qoi_extrapolated"] = qoi_extrapolated;
    j["extrapolation_order"] = extrapolation_order;
    j["eoc_standard"] = eoc_standard;
    j["eoc_corrected"] = eoc_corrected;
  }
  return j.dump(2);
}

// CFL probe -------------------------------------------------------------------

CflResult run_cfl_probe(const StudyConfig& cfg) {
  cfg.validate();
  // The 24-element starting mesh is pre-asymptotic for the h^2 scaling, so the
  // probe starts one refinement later.
  const int levels = cfg.resolved_levels();
  const auto meshes = l_shape_hierarchy(levels + 1);
  CflResult res;
  res.grading_mu = cfg.grading_mu;

  TriMesh graded = meshes.front();
  for (int l = 1; l <= levels; ++l) {
    graded = graded_refine(graded, 0, cfg.grading_mu);
    const TriMesh& mesh = meshes[static_cast<std::size_t>(l)];
    CflLevel row;
    row.level = mesh.level;
    row.h = mesh.h;
    row.h_min = mesh.h_min;

    ParabolicProblem prob;
    prob.mesh = &mesh;
    Operators ops(prob, SchemeConfig{});
    row.dt_max = cfl_max_dt(ops.lumped(), ops.stiffness(), ops.dofs().free);
    if (!res.levels.empty()) row.ratio = row.dt_max / res.levels.back().dt_max;
    {
      ParabolicProblem gp;
      gp.mesh = &graded;
      Operators gops(gp, SchemeConfig{});
      row.dt_max_graded = cfl_max_dt(gops.lumped(), gops.stiffness(), gops.dofs().free);
    }

    std::mt19937_64 rng(cfg.seed + static_cast<unsigned>(l));
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    FieldVector u0(mesh.num_vertices(), 0.0);
    for (int v : ops.dofs().free) u0[static_cast<std::size_t>(v)] = dist(rng);

    // Stable run with a constant source: ||U^n|| <= ||U^0|| + sum_k dt ||M~^-1 F||.
    {
      ParabolicProblem sp = prob;
      sp.initial_state = u0;
      sp.f = [](double, Point2) { return 1.0; };
      SchemeConfig scheme;
      const double dt = 0.9 * row.dt_max;
      const long n = 400;
      const auto f = assemble_load(mesh, sp.f, 0.0, IntegrationOptions{});
      const double forcing = lumped_norm(ops.lumped(), ops.apply_inverse_mass(f));
      const double norm0 = lumped_norm(ops.lumped(), u0);
      const auto& lumped = ops.lumped();
      double worst = 0.0;
      const Observer o{"m_norm",
                       [&](long step, double, std::span<const double> s) {
                         const double nrm = lumped_norm(lumped, s);
                         const double bound = norm0 + static_cast<double>(step) * dt * forcing;
                         worst = std::max(worst, nrm / bound);
                         return nrm;
                       },
                       1};
      scheme.enforce_cfl = false;
      run(sp, scheme, TimeGrid(dt * static_cast<double>(n), n), {o});
      row.worst_bound_ratio = worst;
      row.stable_bounded = worst <= 1.0 + 1e-12;
    }
    // Slightly above the limit the top mode must grow until the run aborts.
    {
      ParabolicProblem up = prob;
      up.initial_state = u0;
      SchemeConfig scheme;
      scheme.enforce_cfl = false;
      const double dt = 1.05 * row.dt_max;
      const long n = 20000;
      try {
        run(up, scheme, TimeGrid(dt * static_cast<double>(n), n));
      } catch (const InstabilityError& e) {
        row.unstable_aborted = true;
        row.abort_step = e.step();
      }
    }
    res.levels.push_back(row);
  }
  return res;
}

std::vector<Check> CflResult::checks() const {
  std::vector<Check> c;
  for (const auto& l : levels) {
    const std::string tag = " (level " + std::to_string(l.level) + ")";
    if (l.ratio > 0.0) c.push_back(band("dt_max refinement ratio" + tag, l.ratio, 0.22, 0.28));
    c.push_back({"run at 1.05 dt_max aborts" + tag, l.unstable_aborted,
                 l.unstable_aborted ? "step " + std::to_string(l.abort_step) : "no abort"});
    c.push_back({"run at 0.9 dt_max within stability bound" + tag, l.stable_bounded,
                 "max norm/bound " + fmt(l.worst_bound_ratio, 6)});
    c.push_back({"graded dt_max below uniform" + tag, l.dt_max_graded < l.dt_max,
                 fmt(l.dt_max_graded) + " < " + fmt(l.dt_max)});
  }
  return c;
}

std::string CflResult::to_json() const {
  Json j;
  j["grading_mu"] = grading_mu;
  j["levels"] = Json::array();
  for (const auto& l : levels) {
    j["levels"].push_back({{"level", l.level},
                           {"h", l.h},
                           {"h_min", l.h_min},
                           {"dt_max", l.dt_max},
                           {"ratio", l.ratio},
                           {"dt_max_graded", l.dt_max_graded},
                           {"stable_bounded", l.stable_bounded},
                           {"worst_bound_ratio", l.worst_bound_ratio},
                           {"unstable_aborted", l.unstable_aborted},
                           {"abort_step", l.abort_step}});
  }
  return j.dump(2);
}

// Dispatch --------------------------------------------------------------------

namespace {

void print_record(std::ostream& log, const std::string& title, const ConvergenceRecord& rec) {
  log << title << '\n';
  const auto cell = [&](const std::optional<double>& v, int w, int p, bool sci) {
    if (!v) {
      log << std::setw(w) << "-";
      return;
    }
    if (sci) {
      log << std::scientific;
    } else {
      log << std::fixed;
    }
    log << std::setw(w) << std::setprecision(p) << *v;
    log << std::defaultfloat;
  };
  log << std::setw(5) << "level" << std::setw(9) << "dofs" << std::setw(12) << "L2" << std::setw(7) << "rate"
      << std::setw(12) << "weighted" << std::setw(7) << "rate" << std::setw(12) << "post" << std::setw(7) << "rate"
      << std::setw(11) << "k1h" << '\n';
  for (const auto& r : rec.rows) {
    log << std::setw(5) << r.level << std::setw(9) << r.dofs;
    cell(r.err_l2, 12, 4, true);
    cell(r.rate_l2, 7, 2, false);
    cell(r.err_weighted, 12, 4, true);
    cell(r.rate_weighted, 7, 2, false);
    cell(r.err_post, 12, 4, true);
    cell(r.rate_post, 7, 2, false);
    cell(r.k1h, 11, 6, false);
    log << '\n';
  }
}

std::filesystem::path out_dir(const StudyConfig& cfg) {
  std::filesystem::path p(cfg.out);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

std::vector<Check> run_study(const StudyConfig& cfg, std::ostream& log) {
  cfg.validate();
  switch (cfg.study) {
    case Study::table1: {
      const auto r = run_table1(cfg);
      log << "substeps per nominal step: " << r.substeps << '\n';
      print_record(log, "standard", r.standard);
      print_record(log, "energy-corrected", r.corrected);
      log << "k1 error rate (levels 3.." << r.standard.rows.size() << "): " << r.k1_eoc << '\n';
      if (!cfg.out.empty()) {
        const auto dir = out_dir(cfg);
        write_file(dir / "table1_standard.csv", r.standard.to_csv());
        write_file(dir / "table1_corrected.csv", r.corrected.to_csv());
      }
      return r.checks();
    }
    case Study::elliptic_pollution: {
      const auto r = run_elliptic_pollution(cfg);
      print_record(log, "standard Ritz projection (post = L2 away from corner)", r.standard);
      print_record(log, "modified Ritz projection (post = L2 away from corner)", r.corrected);
      if (!cfg.out.empty()) {
        const auto dir = out_dir(cfg);
        write_file(dir / "elliptic_standard.csv", r.standard.to_csv());
        write_file(dir / "elliptic_corrected.csv", r.corrected.to_csv());
      }
      return r.checks();
    }
    case Study::gamma: {
      const auto r = run_gamma(cfg);
      const auto json = r.to_json();
      log << json << '\n';
      if (!cfg.out.empty()) write_file(out_dir(cfg) / "gamma.json", json + "\n");
      return gamma_checks(r);
    }
    case Study::advection_qoi: {
      const auto r = run_advection_qoi(cfg);
      const auto json = r.to_json();
      log << json << '\n';
      if (!cfg.out.empty()) write_file(out_dir(cfg) / "advection_qoi.json", json + "\n");
      return r.checks();
    }
    case Study::cfl_probe: {
      const auto r = run_cfl_probe(cfg);
      const auto json = r.to_json();
      log << json << '\n';
      if (!cfg.out.empty()) write_file(out_dir(cfg) / "cfl_probe.json", json + "\n");
      return r.checks();
    }
  }
  return {};
}

}  // namespace cornerheat
