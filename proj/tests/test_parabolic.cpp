#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cornerheat/errors.hpp"
#include "cornerheat/parabolic.hpp"

using namespace cornerheat;

namespace {

constexpr double kPi = std::numbers::pi;

// Unit square with 2x2 cells: a single free vertex at the centre, so the
// semi-discrete system is the scalar model y' = -lambda y.
struct Scalar {
  TriMesh mesh = build_unit_square(2);
  int centre = -1;
  double lambda = 0.0;

  Scalar() {
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
      if (!mesh.is_constrained(static_cast<int>(i))) centre = static_cast<int>(i);
    }
    const auto s = assemble_stiffness(mesh);
    const auto m = lump_mass(assemble_mass(mesh));
    lambda = s.at(centre, centre) / m.diag[static_cast<std::size_t>(centre)];
  }

  ParabolicProblem problem() const {
    ParabolicProblem p;
    p.mesh = &mesh;
    FieldVector u(mesh.num_vertices(), 0.0);
    u[static_cast<std::size_t>(centre)] = 1.0;
    p.initial_state = u;
    return p;
  }

  double final_value(SchemeKind kind, double dt, long steps) const {
    SchemeConfig s;
    s.kind = kind;
    s.enforce_cfl = false;
    return run(problem(), s, TimeGrid(dt * steps, steps)).state[static_cast<std::size_t>(centre)];
  }
};

Eigen::MatrixXd dense(const SparseMatrix& a) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) d(i, a.col_idx()[k]) = a.values()[k];
  }
  return d;
}

FieldVector random_interior(const TriMesh& m, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  FieldVector u(m.num_vertices(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!m.is_constrained(static_cast<int>(i))) u[i] = d(gen);
  }
  return u;
}

double dt_max_of(const TriMesh& m, const std::vector<CorrectionConfig>& c = {}) {
  return cfl_max_dt(lump_mass(assemble_mass(m)), modified_stiffness(m, c), split_dofs(m).free);
}

}  // namespace

TEST(TimeGrid, Basics) {
  const TimeGrid g(1.0, 8);
  EXPECT_DOUBLE_EQ(g.dt(), 0.125);
  EXPECT_DOUBLE_EQ(g.t(3), 0.375);
  EXPECT_THROW(TimeGrid(1.0, 0), Error);
  EXPECT_THROW(TimeGrid(0.0, 4), Error);
}

TEST(Cfl, IdentityPencil) {
  DiagonalMatrix d{{0.5, 2.0, 3.0}};
  std::vector<Triplet> t;
  for (int i = 0; i < 3; ++i) t.push_back({i, i, d.diag[static_cast<std::size_t>(i)]});
  EXPECT_NEAR(cfl_max_dt(d, SparseMatrix::from_triplets(3, 3, t)), 2.0, 1e-12);
}

TEST(Cfl, MatchesDenseGeneralisedEigenvalue) {
  const auto m = build_l_shape();
  const auto dofs = split_dofs(m);
  const auto s = assemble_stiffness(m).extract(dofs.free, dofs.free);
  const auto lumped = lump_mass(assemble_mass(m));
  Eigen::VectorXd inv(static_cast<Eigen::Index>(dofs.free.size()));
  for (std::size_t k = 0; k < dofs.free.size(); ++k) inv(k) = 1.0 / std::sqrt(lumped.diag[dofs.free[k]]);
  const Eigen::MatrixXd a = inv.asDiagonal() * dense(s) * inv.asDiagonal();
  const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().maxCoeff();
  EXPECT_NEAR(2.0 / dt_max_of(m), lmax, 1e-3 * lmax);
}

TEST(Cfl, ScalesWithMeshSizeSquared) {
  auto m = uniform_refine(build_l_shape());
  const double a = dt_max_of(m);
  m = uniform_refine(m);
  const double b = dt_max_of(m);
  EXPECT_NEAR(b / a, 0.25, 0.025);
}

TEST(Cfl, EnforcedByRun) {
  const auto m = build_l_shape();
  ParabolicProblem p;
  p.mesh = &m;
  const double dt = dt_max_of(m);
  EXPECT_THROW(run(p, {}, TimeGrid(dt, 1)), Error);
  EXPECT_NO_THROW(run(p, {}, TimeGrid(0.85 * dt, 1)));
}

TEST(Scalar, ExplicitEulerStabilityBoundary) {
  const Scalar s;
  EXPECT_NEAR(2.0 / s.lambda, dt_max_of(s.mesh), 1e-10);
  EXPECT_NEAR(s.final_value(SchemeKind::explicit_euler, 0.3 / s.lambda, 1), 0.7, 1e-14);
  EXPECT_LT(std::abs(s.final_value(SchemeKind::explicit_euler, 1.9 / s.lambda, 50)), 1e-2);
  try {
    s.final_value(SchemeKind::explicit_euler, 2.1 / s.lambda, 1000);
    FAIL() << "expected instability";
  } catch (const InstabilityError& e) {
    EXPECT_GT(e.step(), 1);
    EXPECT_LT(e.step(), 1000);
  }
}

TEST(Scalar, HeunAmplification) {
  const Scalar s;
  for (double z : {0.5, 1.0, 2.0}) {
    EXPECT_NEAR(s.final_value(SchemeKind::heun, z / s.lambda, 1), 1.0 - z + 0.5 * z * z, 1e-14);
  }
}

TEST(Scalar, CrankNicolsonAmplification) {
  const Scalar s;
  for (double z : {0.5, 10.0, 1000.0}) {
    const double amp = s.final_value(SchemeKind::crank_nicolson, z / s.lambda, 1);
    EXPECT_NEAR(amp, (1.0 - z / 2) / (1.0 + z / 2), 1e-9);
    EXPECT_LT(std::abs(amp), 1.0);
  }
}

TEST(Run, ZeroProblemStaysZero) {
  const auto m = uniform_refine(build_l_shape());
  ParabolicProblem p;
  p.mesh = &m;
  p.g = [](double, Point2) { return 0.0; };
  p.u0 = [](Point2) { return 0.0; };
  for (auto kind : {SchemeKind::explicit_euler, SchemeKind::heun, SchemeKind::crank_nicolson}) {
    SchemeConfig s;
    s.kind = kind;
    const auto r = run(p, s, TimeGrid(0.01, 10));
    for (double v : r.state) EXPECT_EQ(v, 0.0);
    EXPECT_TRUE(r.rows.empty());
    EXPECT_TRUE(r.columns.empty());
  }
}

TEST(Run, FirstStepFromRestIsLumpedQuadrature) {
  const auto m = uniform_refine(build_l_shape());
  ParabolicProblem p;
  p.mesh = &m;
  p.f = [](double, Point2 x) { return 1.0 + x.x * x.y; };
  const double dt = 1e-3;
  const auto r = run(p, {}, TimeGrid(dt, 1));
  const auto f = assemble_load(m, p.f, 0.0, {});
  const auto d = lump_mass(assemble_mass(m));
  for (int v : split_dofs(m).free) EXPECT_NEAR(r.state[v], dt * f[v] / d.diag[v], 1e-15);
}

TEST(Run, HeunExactForLinearInTime) {
  // u = t (x + y): harmonic in space, u_t = f = x + y. With vertex quadrature
  // the load equals the lumped mass times nodal f, so U(t) = t I(x + y) solves
  // the semi-discrete system exactly.
  const auto m = uniform_refine(build_unit_square(4));
  static const auto rule = QuadratureRule::vertices();
  ParabolicProblem p;
  p.mesh = &m;
  p.f = [](double, Point2 x) { return x.x + x.y; };
  p.g = [](double t, Point2 x) { return t * (x.x + x.y); };
  p.u0 = [](Point2) { return 0.0; };
  p.load_options.rule = &rule;
  SchemeConfig s;
  s.kind = SchemeKind::heun;
  const auto r = run(p, s, TimeGrid(0.5, 2000));
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    EXPECT_NEAR(r.state[i], 0.5 * (m.vertices[i].x + m.vertices[i].y), 1e-12);
  }
}

TEST(Run, CrankNicolsonSecondOrderInTime) {
  const auto m = uniform_refine(build_unit_square(8));
  ParabolicProblem p;
  p.mesh = &m;
  // starts at rest with a load vanishing at t = 0, so the stiff modes CN
  // barely damps are never excited away from their quasi-static values
  p.f = [](double t, Point2 x) { return std::sin(2.0 * t) * (x.x * (1 - x.x) + x.y); };
  SchemeConfig s;
  s.kind = SchemeKind::crank_nicolson;
  s.mass = MassKind::consistent;
  s.solver_tol = 1e-14;
  std::vector<FieldVector> u;
  for (long n : {10, 20, 40, 80}) u.push_back(run(p, s, TimeGrid(0.5, n)).state);
  std::vector<double> d;
  for (std::size_t k = 1; k < u.size(); ++k) {
    double e = 0.0;
    for (std::size_t i = 0; i < u[k].size(); ++i) e = std::max(e, std::abs(u[k][i] - u[k - 1][i]));
    d.push_back(e);
  }
  EXPECT_NEAR(std::log2(d[1] / d[2]), 2.0, 0.1);
}

TEST(Run, CrankNicolsonLargeStepsDoNotGrow) {
  const auto m = uniform_refine(build_l_shape());
  const auto d = lump_mass(assemble_mass(m));
  ParabolicProblem p;
  p.mesh = &m;
  p.initial_state = random_interior(m, 3);
  SchemeConfig s;
  s.kind = SchemeKind::crank_nicolson;
  double prev = lumped_norm(d, *p.initial_state);
  Observer o{"norm", [&](long, double, std::span<const double> u) { return lumped_norm(d, u); }, 1};
  const auto r = run(p, s, TimeGrid(50.0, 10), {o});
  for (const auto& row : r.rows) {
    EXPECT_LE(*row.values[0], prev * (1 + 1e-12));
    prev = *row.values[0];
  }
}

TEST(Run, ExplicitEulerNormNonIncreasingBelowCfl) {
  auto m = build_l_shape();
  for (int l = 0; l < 3; ++l) {
    m = uniform_refine(m);
    const std::vector<CorrectionConfig> c{{0, 1, {0.13}}};
    const auto d = lump_mass(assemble_mass(m));
    ParabolicProblem p;
    p.mesh = &m;
    p.corrections = c;
    p.initial_state = random_interior(m, 5 + l);
    const double dt = 0.9 * dt_max_of(m, c);
    double prev = lumped_norm(d, *p.initial_state);
    bool ok = true;
    Observer o{"norm", [&](long, double, std::span<const double> u) {
                 const double v = lumped_norm(d, u);
                 ok = ok && v <= prev * (1 + 1e-12);
                 prev = v;
                 return v;
               }, 1};
    run(p, {}, TimeGrid(200 * dt, 200), {o});
    EXPECT_TRUE(ok) << "level " << m.level;
  }
}

TEST(Run, ExplicitEulerAbortsAboveCfl) {
  const auto m = uniform_refine(build_l_shape());
  ParabolicProblem p;
  p.mesh = &m;
  p.initial_state = random_interior(m, 9);
  SchemeConfig s;
  s.enforce_cfl = false;
  const double dt = 1.05 * dt_max_of(m);
  EXPECT_THROW(run(p, s, TimeGrid(5000 * dt, 5000)), InstabilityError);
}

TEST(Run, EulerAndHeunLocalErrorOrders) {
  const auto m = uniform_refine(build_unit_square(4));
  ParabolicProblem p;
  p.mesh = &m;
  p.u0 = [](Point2 x) { return std::sin(kPi * x.x) * std::sin(kPi * x.y); };
  p.f = [](double t, Point2 x) { return std::exp(t) * x.y; };
  const auto local_error = [&](SchemeKind kind, double dt) {
    SchemeConfig s;
    s.kind = kind;
    SchemeConfig ref;
    ref.kind = SchemeKind::heun;
    const auto a = run(p, s, TimeGrid(dt, 1)).state;
    const auto b = run(p, ref, TimeGrid(dt, 400)).state;
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
    return e;
  };
  const double dt = 0.5 * dt_max_of(m);
  EXPECT_NEAR(std::log2(local_error(SchemeKind::explicit_euler, dt) /
                        local_error(SchemeKind::explicit_euler, dt / 2)), 2.0, 0.2);
  EXPECT_NEAR(std::log2(local_error(SchemeKind::heun, dt) / local_error(SchemeKind::heun, dt / 2)), 3.0, 0.3);
}

TEST(Run, BoundaryDataMustMatchInitialCondition) {
  const auto m = build_l_shape();
  ParabolicProblem p;
  p.mesh = &m;
  p.u0 = [](Point2) { return 0.0; };
  p.g = [](double, Point2) { return 1.0; };
  EXPECT_THROW(run(p, {}, TimeGrid(0.001, 1)), Error);
}

TEST(Run, CrankNicolsonRejectsAdvection) {
  const auto m = build_l_shape();
  ParabolicProblem p;
  p.mesh = &m;
  p.advection = {1.0, 1.0};
  SchemeConfig s;
  s.kind = SchemeKind::crank_nicolson;
  EXPECT_THROW(run(p, s, TimeGrid(0.1, 1)), Error);
}

TEST(Run, ConsistentMassExplicitMatchesLumpedToLeadingOrder) {
  const auto m = uniform_refine(uniform_refine(build_l_shape()));
  ParabolicProblem p;
  p.mesh = &m;
  p.f = [](double, Point2) { return 1.0; };
  SchemeConfig lumped, consistent;
  consistent.mass = MassKind::consistent;
  const double dt = 0.25 * dt_max_of(m);  // consistent mass has the larger spectrum
  consistent.enforce_cfl = false;
  const auto a = run(p, lumped, TimeGrid(100 * dt, 100)).state;
  const auto b = run(p, consistent, TimeGrid(100 * dt, 100)).state;
  double diff = 0.0, size = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    size = std::max(size, std::abs(a[i]));
  }
  EXPECT_LT(diff, 0.1 * size);
}

TEST(Run, CorrectedInitialStateIsModifiedRitz) {
  const auto m = uniform_refine(build_l_shape());
  const SingularFunction s1(1, l_shape_corner());
  ParabolicProblem p;
  p.mesh = &m;
  p.corrections = {{0, 1, {0.12}}};
  p.u0 = s1.field();
  p.g = [&](double, Point2 x) { return s1.value(x); };
  const auto u = initial_state(p);
  const auto r = modified_ritz(m, p.corrections, s1.field(), s1.field());
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(u[i], r[i], 1e-12);
}

TEST(Observers, CsvColumns) {
  const auto m = uniform_refine(build_l_shape());
  ParabolicProblem p;
  p.mesh = &m;
  p.f = [](double, Point2) { return 1.0; };
  const TimeField zero = [](double, Point2) { return 0.0; };
  auto sparse = linf_observer();
  sparse.every = 2;
  const auto r = run(p, {}, TimeGrid(0.005, 5),
                     {sparse, l2_error_observer(m, zero, {}), weighted_error_observer(m, zero, 1.0 / 3.0, {})});
  std::ostringstream s;
  r.write_csv(s);
  std::istringstream in(s.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,t,linf,l2_err,weighted_err");
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 6);
  EXPECT_FALSE(r.rows[1].values[0].has_value());
  EXPECT_TRUE(r.rows[5].values[0].has_value());
  EXPECT_GT(*r.rows[5].values[1], *r.rows[5].values[2]);
}
