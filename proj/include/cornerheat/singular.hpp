#pragma once

#include <optional>

#include "cornerheat/fem.hpp"
#include "cornerheat/geometry.hpp"

namespace cornerheat {

/// C^2 radial cutoff: 1 for r <= r0, 0 for r >= r1, quintic blend
/// eta = 1 - rho^3 (10 - 15 rho + 6 rho^2), rho = (r - r0) / (r1 - r0).
struct CutoffEta {
  double r0 = 0.25;
  double r1 = 0.75;

  CutoffEta() = default;
  CutoffEta(double inner, double outer);

  [[nodiscard]] double value(double r) const;
  [[nodiscard]] double d1(double r) const;
  [[nodiscard]] double d2(double r) const;
};

/// eta(r) r^lambda sin(lambda phi), lambda = n pi / theta, in the corner's
/// local polar frame. Negative n gives the dual functions.
class SingularFunction {
 public:
  SingularFunction(int n, const ReentrantCorner& corner, std::optional<CutoffEta> eta = std::nullopt);

  struct Polar {
    double r;
    double phi;
  };

  [[nodiscard]] int index() const { return n_; }
  [[nodiscard]] double lambda() const { return lambda_; }
  [[nodiscard]] const ReentrantCorner& corner() const { return corner_; }
  [[nodiscard]] const std::optional<CutoffEta>& eta() const { return eta_; }

  /// Throws DomainError when x lies outside the corner wedge.
  [[nodiscard]] Polar polar(Point2 x) const;
  [[nodiscard]] double value(Point2 x) const;
  [[nodiscard]] Vec2 gradient(Point2 x) const;
  /// (d/dr, r^-1 d/dphi) components.
  [[nodiscard]] Vec2 polar_gradient(Point2 x) const;
  /// Delta(eta w) = sin(lambda phi) r^lambda (eta'' + (1 + 2 lambda) eta' / r);
  /// zero wherever eta is constant.
  [[nodiscard]] double laplacian(Point2 x) const;

  [[nodiscard]] ScalarField field() const;

 private:
  [[nodiscard]] bool outside_support(Point2 x) const;

  int n_;
  ReentrantCorner corner_;
  double lambda_;
  std::optional<CutoffEta> eta_;
};

/// Laplacian of a cut-off dual function (n < 0); throws if no cutoff is set.
double laplacian_dual(const SingularFunction& s, Point2 x);

/// The L-shape's re-entrant corner: origin, theta = 3pi/2, edge along +x.
ReentrantCorner l_shape_corner();

enum class ManufacturedKind { table1, advection_qoi };

struct ManufacturedValues {
  double u;    // NaN when no exact solution is known
  double u_t;  // NaN when no exact solution is known
  double f;
  double g;
};

/// u = sin(t) s1 + sin(2t) s2 - sin(3t) s3 with harmonic s_n (no cutoff), so
/// f = u_t and the Dirichlet data is u itself.
class Table1Solution {
 public:
  explicit Table1Solution(const ReentrantCorner& corner = l_shape_corner());

  [[nodiscard]] double u(double t, Point2 x) const;
  [[nodiscard]] double u_t(double t, Point2 x) const;
  [[nodiscard]] Vec2 grad_u(double t, Point2 x) const;
  [[nodiscard]] double f(double t, Point2 x) const { return u_t(t, x); }
  [[nodiscard]] double k1(double t) const;
  [[nodiscard]] const SingularFunction& mode(int n) const { return modes_.at(static_cast<std::size_t>(n - 1)); }

 private:
  std::vector<SingularFunction> modes_;
};

/// Source of the advection-diffusion study:
/// f = sin(pi t) / ((x - 2)^2 + (y - 3/2)^2); singular inside the removed triangle.
double advection_qoi_source(double t, Point2 x);
/// Spatial factor of advection_qoi_source.
double advection_qoi_shape(Point2 x);

ManufacturedValues manufactured_solution(ManufacturedKind kind, double t, Point2 x);

}  // namespace cornerheat
