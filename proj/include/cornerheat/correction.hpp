#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cornerheat/fem.hpp"
#include "cornerheat/geometry.hpp"
#include "cornerheat/singular.hpp"
#include "cornerheat/sparse.hpp"

namespace cornerheat {

/// c_h(w, v) = sum_i gamma_i int_{omega^i_h} grad w . grad v around one corner.
struct CorrectionConfig {
  int corner = 0;
  int layers = 1;
  std::vector<double> gammas{0.0};

  /// Throws Error on inconsistent layer/parameter counts or, for a single
  /// layer, gamma outside [0, 1/2).
  void validate() const;
};

SparseMatrix build_correction(const TriMesh& mesh, const CorrectionConfig& cfg);

/// S - sum of the corrections.
SparseMatrix modified_stiffness(const TriMesh& mesh, std::span<const CorrectionConfig> corrections);

/// Solves a_h(R u, v) = a(u, v) for all v vanishing on the boundary, with
/// R u = g at constrained vertices.
FieldVector modified_ritz(const TriMesh& mesh, std::span<const CorrectionConfig> corrections, const ScalarField& u,
                          const ScalarField& g, double tol = 1e-10);

/// a(s, s) over the mesh domain. Without cutoff this sums signed corner-apex
/// triangles over the boundary edges (|grad s|^2 = lambda^2 r^(2 lambda - 2)
/// is radial); with a cutoff it is a 1D radial integral over the support.
double singular_energy(const TriMesh& mesh, const SingularFunction& s);

/// Evaluates the energy defect
///   g_h(gamma) = a(s1 - s1h, s1 - s1h) - c_h(s1h, s1h)
/// where s1h is the modified Ritz projection of s1 for parameter gamma.
class EnergyDefect {
 public:
  EnergyDefect(const TriMesh& mesh, int corner, int layers = 1, std::optional<CutoffEta> eta = std::nullopt,
               std::vector<double> outer_gammas = {});

  /// gamma is the first-layer parameter; outer layers use the fixed values.
  double operator()(double gamma);
  [[nodiscard]] const FieldVector& last_projection() const { return last_; }
  [[nodiscard]] double singular_energy() const { return a11_; }
  [[nodiscard]] double h() const { return h_; }

 private:
  const TriMesh& mesh_;
  int corner_;
  int layers_;
  std::vector<double> outer_;
  SingularFunction s1_;
  SparseMatrix stiffness_;
  std::vector<SparseMatrix> layer_stiffness_;
  FieldVector load_;
  double a11_ = 0.0;
  double h_ = 0.0;
  DofSplit dofs_;
  FieldVector lift_;
  FieldVector last_;
  FieldVector warm_;
};

struct GammaLevel {
  int level = 0;
  double h = 0.0;
  double gamma = 0.0;
  double defect = 0.0;
  int iterations = 0;
  double tolerance = 0.0;
};

struct GammaSearchReport {
  std::vector<GammaLevel> levels;
  bool converged = false;

  [[nodiscard]] double gamma() const { return levels.empty() ? 0.0 : levels.back().gamma; }
  /// {"levels": [{"level", "h", "gamma", "defect", "iters"}], "converged"}
  [[nodiscard]] std::string to_json() const;
};

struct GammaSearchOptions {
  int corner = 0;
  int layers = 1;
  /// Stop early once consecutive level roots differ by at most 10 * tol.
  double tol = 1e-12;
  std::optional<CutoffEta> eta;
  std::vector<double> outer_gammas;
  int max_iterations = 60;
};

/// Nested safeguarded secant search for the root of the energy defect over a
/// mesh hierarchy (coarse to fine), each level starting from the previous root.
GammaSearchReport find_gamma(std::span<const TriMesh> hierarchy, const GammaSearchOptions& options);

/// Throws DomainError unless the cutoff support of `dual` meets the boundary
/// only along the two corner edges.
void check_dual_support(const TriMesh& mesh, const SingularFunction& dual);

/// k^h = -1/(n pi) int f s_{-n} + u_h Delta s_{-n}, with s_{-n} the cut-off
/// dual (its sine factor is sin(-n pi phi / theta)).
double extract_k1_elliptic(const TriMesh& mesh, std::span<const double> u_h, const ScalarField& f,
                           const SingularFunction& dual);

/// Same with f replaced by f(T) - (u_last - u_prev) / dt.
double extract_k1_parabolic(const TriMesh& mesh, std::span<const double> u_last, std::span<const double> u_prev,
                            double dt, const ScalarField& f_at_t, const SingularFunction& dual);

/// u_h - k1h s1h^m plus the analytic tail k1h s1.
struct PostProcessed {
  FieldVector field;
  double k1h = 0.0;
  SingularFunction s1;

  [[nodiscard]] double value(const TriMesh& mesh, std::size_t vertex) const;
  /// Exact solution minus the analytic tail, for measuring errors of the
  /// post-processed approximation against its discrete part.
  [[nodiscard]] ScalarField residual_target(const ScalarField& u_exact) const;
};

PostProcessed post_process(std::span<const double> u_h, std::span<const double> s1h, double k1h,
                           const SingularFunction& s1);

/// Computes s1h^m with boundary data s1 and post-processes.
PostProcessed post_process(const TriMesh& mesh, std::span<const CorrectionConfig> corrections,
                           std::span<const double> u_h, double k1h, const SingularFunction& s1);

}  // namespace cornerheat
