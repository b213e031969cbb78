#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cornerheat/geometry.hpp"

namespace cornerheat {

/// Triangle rule in barycentric coordinates; weights sum to one, so the
/// integral over a triangle T is |T| * sum_q w_q f(x_q).
struct QuadratureRule {
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;
  int degree = 0;

  /// 6-point Strang-Fix/Dunavant rule, exact for degree 4.
  static QuadratureRule dunavant4();
  /// Vertex rule (degree 1); produces the lumped mass.
  static QuadratureRule vertices();
  static QuadratureRule centroid();
  /// Collapsed (conical) Gauss product rule with n points per direction,
  /// exact for degree 2n - 2.
  static QuadratureRule conical(int n);
};

/// Gauss-Legendre nodes and weights on [0, 1].
struct GaussRule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussRule1D& gauss_legendre(int n);

struct Circle {
  Point2 center;
  double radius = 0.0;
};

/// Controls element integration of integrands that are singular at some
/// vertices or have kinks across circles.
struct IntegrationOptions {
  const QuadratureRule* rule = nullptr;  // dunavant4 when null
  /// Triangles with a vertex at one of these points are integrated with a
  /// Duffy map graded geometrically toward that vertex.
  std::vector<Point2> singular_points;
  int duffy_levels = 3;
  int duffy_points = 5;
  double duffy_ratio = 0.2;
  /// Triangles crossed by one of these circles are subdivided before the rule
  /// is applied.
  std::vector<Circle> circles;
  int circle_depth = 3;
  /// Integrand vanishes outside this disc; triangles outside it are skipped.
  std::optional<Circle> support;
};

/// Callback receives the physical point, its barycentric coordinates with
/// respect to the original triangle, and the absolute quadrature weight.
using QuadraturePointFn = std::function<void(Point2, const std::array<double, 3>&, double)>;

void for_each_quadrature_point(const std::array<Point2, 3>& tri, const IntegrationOptions& options,
                               const QuadraturePointFn& fn);

/// Options for line integrals along mesh edges.
struct SegmentOptions {
  int points = 10;
  std::vector<Point2> singular_points;
  int grading_levels = 14;
  double grading_ratio = 0.15;
  std::vector<Circle> circles;
};

/// Callback receives the point, the parameter t in [0, 1] along a->b and the
/// absolute weight (including the segment length).
void for_each_segment_point(Point2 a, Point2 b, const SegmentOptions& options,
                            const std::function<void(Point2, double, double)>& fn);

/// True when the circle passes through the interior of the triangle.
bool circle_crosses_triangle(const Circle& c, const std::array<Point2, 3>& tri);

}  // namespace cornerheat
