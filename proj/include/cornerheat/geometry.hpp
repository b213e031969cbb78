#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

namespace cornerheat {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

using Vec2 = Point2;

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

enum class BoundaryKind : std::uint8_t { interior, dirichlet, neumann };

struct BoundaryMark {
  BoundaryKind kind = BoundaryKind::interior;
  int segment = -1;
};

/// Oriented boundary edge; the domain lies to the left of v[0] -> v[1].
struct BoundaryEdge {
  std::array<int, 2> v{};
  int segment = -1;
  BoundaryKind kind = BoundaryKind::dirichlet;
};

/// A boundary vertex with interior angle theta in (pi, 2pi). The local polar
/// angle is measured counter-clockwise from edge_angle, so the domain occupies
/// 0 <= phi <= theta near the vertex.
struct ReentrantCorner {
  Point2 vertex;
  double theta = 0.0;
  double bisector_angle = 0.0;
  double edge_angle = 0.0;
  int vertex_index = -1;
};

struct TriMesh {
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<BoundaryMark> boundary_marks;   // one per vertex
  std::vector<BoundaryEdge> boundary_edges;
  std::vector<ReentrantCorner> corners;
  int level = 1;
  double h = 0.0;      // max element diameter
  double h_min = 0.0;  // min element diameter
  // Vertex positions before radial grading; empty for ungraded meshes.
  std::vector<Point2> unmapped;

  [[nodiscard]] std::size_t num_vertices() const { return vertices.size(); }
  [[nodiscard]] std::size_t num_triangles() const { return triangles.size(); }
  [[nodiscard]] bool is_constrained(int v) const {
    return boundary_marks[static_cast<std::size_t>(v)].kind == BoundaryKind::dirichlet;
  }
  [[nodiscard]] std::array<Point2, 3> corners_of(std::size_t t) const {
    const auto& tri = triangles[t];
    return {vertices[static_cast<std::size_t>(tri[0])], vertices[static_cast<std::size_t>(tri[1])],
            vertices[static_cast<std::size_t>(tri[2])]};
  }
};

/// Triangle sets omega^1 .. omega^K around one corner.
struct CornerLayers {
  int corner_index = 0;
  std::vector<std::vector<int>> layers;
};

double signed_area(Point2 a, Point2 b, Point2 c);
double triangle_area(const TriMesh& mesh, std::size_t t);
double triangle_diameter(const TriMesh& mesh, std::size_t t);
double mesh_area(const TriMesh& mesh);
std::size_t count_edges(const TriMesh& mesh);

/// Recomputes h and h_min from the current geometry.
void update_sizes(TriMesh& mesh);

/// Throws MeshError unless the mesh is conforming, positively oriented and its
/// boundary edge list matches the set of edges owned by a single triangle.
void audit_mesh(const TriMesh& mesh);

/// Finds boundary vertices with interior angle above pi.
std::vector<ReentrantCorner> detect_reentrant_corners(const TriMesh& mesh);

/// (-1,1)^2 minus [0,1]x[-1,0], unit squares split into 2x2 cells.
TriMesh build_l_shape();

/// (0,4)x(0,3) with the right isosceles triangle (1,1),(3,1),(2,2) removed.
TriMesh build_notched_rectangle();

/// Unit square [0,1]^2 with n x n cells and alternating diagonals.
TriMesh build_unit_square(int n);

TriMesh uniform_refine(const TriMesh& mesh);

/// Uniform refinement followed by the radial map
///   x -> c + (x - c) (|x - c| / radius)^(1/mu - 1)   for |x - c| < radius,
/// which pulls vertices toward the corner so that h_min ~ h^(1/mu).
TriMesh graded_refine(const TriMesh& mesh, int corner, double mu, double radius = 0.5);

CornerLayers corner_layers(const TriMesh& mesh, int corner, int layer_count);

/// Stand-alone mesh of the first `rings` element layers around a corner, with
/// Dirichlet data on its whole boundary and the centre as its only corner.
TriMesh corner_neighbourhood(const TriMesh& mesh, int corner, int rings);

void write_tmesh(std::ostream& out, const TriMesh& mesh);
TriMesh read_tmesh(std::istream& in);

}  // namespace cornerheat
