#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cornerheat/correction.hpp"
#include "cornerheat/fem.hpp"
#include "cornerheat/geometry.hpp"
#include "cornerheat/sparse.hpp"

namespace cornerheat {

struct TimeGrid {
  double t_end = 1.0;
  long n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double end, long steps);

  [[nodiscard]] double dt() const { return t_end / static_cast<double>(n_steps); }
  [[nodiscard]] double t(long n) const { return static_cast<double>(n) * dt(); }
};

/// Load contribution a(t) * load, with the spatial vector assembled once.
struct SeparableLoad {
  std::function<double(double)> amplitude;
  FieldVector load;
};

/// u_t + b . grad u - Delta u = f with Dirichlet data g on the marked boundary.
struct ParabolicProblem {
  const TriMesh* mesh = nullptr;
  std::vector<CorrectionConfig> corrections;
  Vec2 advection{0.0, 0.0};
  TimeField f;                           // may be empty
  std::vector<SeparableLoad> separable;  // added to the assembled f
  TimeField g;                           // empty means homogeneous data
  ScalarField u0;                        // empty means zero
  std::optional<FieldVector> initial_state;
  IntegrationOptions load_options;
};

enum class SchemeKind { explicit_euler, heun, crank_nicolson };
enum class MassKind { lumped, consistent };

struct SchemeConfig {
  SchemeKind kind = SchemeKind::explicit_euler;
  MassKind mass = MassKind::lumped;
  double cfl_safety = 0.9;
  /// Refuse lumped explicit runs with dt above cfl_safety * cfl_max_dt.
  bool enforce_cfl = true;
  /// Abort once ||U||_inf exceeds this multiple of max(1, ||U^0||_inf, ||g||).
  double growth_limit = 1e8;
  double solver_tol = 1e-10;
};

/// Everything the steppers need, assembled once per problem.
class Operators {
 public:
  Operators(const ParabolicProblem& problem, const SchemeConfig& scheme);

  [[nodiscard]] const SparseMatrix& stiffness() const { return stiffness_; }
  /// Modified stiffness plus the advection matrix.
  [[nodiscard]] const SparseMatrix& system() const { return system_; }
  [[nodiscard]] const SparseMatrix& mass() const { return mass_; }
  [[nodiscard]] const DiagonalMatrix& lumped() const { return lumped_; }
  [[nodiscard]] const DofSplit& dofs() const { return dofs_; }
  [[nodiscard]] const SchemeConfig& scheme() const { return scheme_; }

  /// F(t), cached for the two most recent times.
  const FieldVector& load(const ParabolicProblem& problem, double t);
  /// M^-1 r on the free dofs (lumped or consistent), zero elsewhere.
  [[nodiscard]] FieldVector apply_inverse_mass(std::span<const double> r) const;
  /// Crank-Nicolson left-hand side for dt, rebuilt when dt changes.
  const SparseMatrix& cn_matrix(double dt);

 private:
  SchemeConfig scheme_;
  SparseMatrix stiffness_;
  SparseMatrix system_;
  SparseMatrix mass_;
  SparseMatrix mass_free_;
  DiagonalMatrix lumped_;
  DofSplit dofs_;
  struct CachedLoad {
    double t;
    FieldVector f;
  };
  std::vector<CachedLoad> cache_;
  double cn_dt_ = -1.0;
  SparseMatrix cn_;
};

/// 2 / lambda_max(M~^-1 S) over the free dofs, by power iteration on the
/// symmetric form M~^-1/2 S M~^-1/2 (relative tolerance 1e-4, at most 500 steps).
double cfl_max_dt(const DiagonalMatrix& lumped, const SparseMatrix& stiffness, std::span<const int> free_dofs,
                  double tol = 1e-4, int max_iter = 500);
/// All rows treated as free.
double cfl_max_dt(const DiagonalMatrix& lumped, const SparseMatrix& stiffness);

FieldVector step_explicit_euler(std::span<const double> state, double t_n, double dt, const ParabolicProblem& problem,
                                Operators& ops);
FieldVector step_heun(std::span<const double> state, double t_n, double dt, const ParabolicProblem& problem,
                      Operators& ops);
FieldVector step_crank_nicolson(std::span<const double> state, double t_n, double dt, const ParabolicProblem& problem,
                                Operators& ops);

/// Scalar quantity sampled after each step; the column name heads the CSV.
struct Observer {
  std::string column;
  std::function<double(long, double, std::span<const double>)> fn;
  long every = 1;
};

struct ObserverRow {
  long step = 0;
  double t = 0.0;
  std::vector<std::optional<double>> values;
};

struct RunResult {
  FieldVector state;
  FieldVector previous;  // state one step before the end (equals state for N = 0)
  std::vector<std::string> columns;
  std::vector<ObserverRow> rows;
  double wall_seconds = 0.0;  // time loop only
  double dt_max = 0.0;        // 0 when not computed

  /// step,t,<columns...>
  void write_csv(std::ostream& out) const;
};

/// Initial state: the supplied vector, else the modified Ritz projection of u0
/// when corrections are present, else the nodal interpolant.
FieldVector initial_state(const ParabolicProblem& problem);

RunResult run(const ParabolicProblem& problem, const SchemeConfig& scheme, const TimeGrid& grid,
              const std::vector<Observer>& observers = {});

/// Standard observers.
Observer linf_observer();
Observer l2_error_observer(const TriMesh& mesh, TimeField exact, IntegrationOptions options);
Observer weighted_error_observer(const TriMesh& mesh, TimeField exact, double alpha, IntegrationOptions options);

/// ||v||_M~ = sqrt(sum m_i v_i^2).
double lumped_norm(const DiagonalMatrix& lumped, std::span<const double> v);

}  // namespace cornerheat
