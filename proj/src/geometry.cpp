#include "cornerheat/geometry.hpp"

#include <algorithm>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "cornerheat/errors.hpp"

namespace cornerheat {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (hi << 32U) | lo;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a;
}

// Edges owned by exactly one triangle, oriented as in that triangle.
std::vector<std::array<int, 2>> free_edges(const TriMesh& mesh) {
  std::unordered_map<std::uint64_t, int> count;
  count.reserve(mesh.triangles.size() * 3);
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) ++count[edge_key(tri[k], tri[(k + 1) % 3])];
  }
  std::vector<std::array<int, 2>> out;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k];
      const int b = tri[(k + 1) % 3];
      if (count[edge_key(a, b)] == 1) out.push_back({a, b});
    }
  }
  return out;
}

// Walks boundary loops, numbering straight runs of edges as segments. Every
// boundary vertex is tagged with the segment of the edge leaving it.
void assign_boundary(TriMesh& mesh) {
  auto edges = free_edges(mesh);
  std::unordered_map<int, std::size_t> outgoing;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!outgoing.emplace(edges[e][0], e).second) {
      throw MeshError("boundary vertex with two outgoing edges (pinched boundary)");
    }
  }
  mesh.boundary_marks.assign(mesh.vertices.size(), BoundaryMark{});
  mesh.boundary_edges.clear();
  std::vector<bool> visited(edges.size(), false);
  int segment = -1;
  // Start loops at the lowest-index vertex where the direction changes so the
  // numbering does not depend on hash order.
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return edges[a][0] < edges[b][0]; });
  auto dir = [&](std::size_t e) {
    return mesh.vertices[static_cast<std::size_t>(edges[e][1])] -
           mesh.vertices[static_cast<std::size_t>(edges[e][0])];
  };
  auto incoming_of = [&](std::size_t e) {
    for (std::size_t f = 0; f < edges.size(); ++f) {
      if (edges[f][1] == edges[e][0]) return f;
    }
    throw MeshError("open boundary loop");
  };
  for (std::size_t start : order) {
    if (visited[start]) continue;
    // Only start at a kink, if the loop has one.
    const std::size_t prev = incoming_of(start);
    const Vec2 d0 = dir(prev);
    const Vec2 d1 = dir(start);
    if (std::abs(cross(d0, d1)) <= 1e-12 * norm(d0) * norm(d1)) {
      bool any_kink = false;
      std::size_t e = start;
      do {
        const std::size_t next = outgoing.at(edges[e][1]);
        if (std::abs(cross(dir(e), dir(next))) > 1e-12 * norm(dir(e)) * norm(dir(next))) {
          any_kink = true;
          break;
        }
        e = next;
      } while (e != start);
      if (any_kink) continue;
    }
    ++segment;
    std::size_t e = start;
    do {
      visited[e] = true;
      mesh.boundary_edges.push_back({edges[e], segment, BoundaryKind::dirichlet});
      mesh.boundary_marks[static_cast<std::size_t>(edges[e][0])] = {BoundaryKind::dirichlet, segment};
      const std::size_t next = outgoing.at(edges[e][1]);
      if (next != start &&
          std::abs(cross(dir(e), dir(next))) > 1e-12 * norm(dir(e)) * norm(dir(next))) {
        ++segment;
      }
      e = next;
    } while (e != start);
  }
}

// Renumbers vertices lexicographically by (y, x).
void sort_vertices(TriMesh& mesh) {
  const std::size_t nv = mesh.vertices.size();
  std::vector<int> order(nv);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Point2 pa = mesh.vertices[static_cast<std::size_t>(a)];
    const Point2 pb = mesh.vertices[static_cast<std::size_t>(b)];
    return pa.y != pb.y ? pa.y < pb.y : pa.x < pb.x;
  });
  std::vector<int> new_index(nv);
  std::vector<Point2> verts(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    new_index[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    verts[i] = mesh.vertices[static_cast<std::size_t>(order[i])];
  }
  mesh.vertices = std::move(verts);
  for (auto& tri : mesh.triangles) {
    for (int& v : tri) v = new_index[static_cast<std::size_t>(v)];
  }
}

struct CellSpec {
  double x0, y0, cell;
  int nx, ny;
  std::function<bool(Point2)> keep;          // centroid test
  std::function<bool(Point2)> main_diagonal;  // cell center -> split (x0,y0)-(x1,y1)
};

TriMesh build_from_cells(const CellSpec& spec) {
  TriMesh mesh;
  std::map<std::pair<int, int>, int> ids;
  auto vertex = [&](int i, int j) {
    auto [it, inserted] = ids.emplace(std::make_pair(i, j), static_cast<int>(mesh.vertices.size()));
    if (inserted) mesh.vertices.push_back({spec.x0 + i * spec.cell, spec.y0 + j * spec.cell});
    return it->second;
  };
  auto add = [&](std::array<std::pair<int, int>, 3> ij) {
    Point2 c{0.0, 0.0};
    for (auto [i, j] : ij) c = c + (1.0 / 3.0) * Point2{spec.x0 + i * spec.cell, spec.y0 + j * spec.cell};
    if (!spec.keep(c)) return;
    mesh.triangles.push_back({vertex(ij[0].first, ij[0].second), vertex(ij[1].first, ij[1].second),
                              vertex(ij[2].first, ij[2].second)});
  };
  for (int j = 0; j < spec.ny; ++j) {
    for (int i = 0; i < spec.nx; ++i) {
      const Point2 center{spec.x0 + (i + 0.5) * spec.cell, spec.y0 + (j + 0.5) * spec.cell};
      if (spec.main_diagonal(center)) {
        add({{{i, j}, {i + 1, j}, {i + 1, j + 1}}});
        add({{{i, j}, {i + 1, j + 1}, {i, j + 1}}});
      } else {
        add({{{i, j}, {i + 1, j}, {i, j + 1}}});
        add({{{i + 1, j}, {i + 1, j + 1}, {i, j + 1}}});
      }
    }
  }
  return mesh;
}

void finalize(TriMesh& mesh) {
  sort_vertices(mesh);
  assign_boundary(mesh);
  mesh.corners = detect_reentrant_corners(mesh);
  mesh.level = 1;
  update_sizes(mesh);
  audit_mesh(mesh);
}

std::vector<std::vector<int>> vertex_triangles(const TriMesh& mesh) {
  std::vector<std::vector<int>> adj(mesh.vertices.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (int v : mesh.triangles[t]) adj[static_cast<std::size_t>(v)].push_back(static_cast<int>(t));
  }
  return adj;
}

}  // namespace

double signed_area(Point2 a, Point2 b, Point2 c) { return 0.5 * cross(b - a, c - a); }

double triangle_area(const TriMesh& mesh, std::size_t t) {
  const auto p = mesh.corners_of(t);
  return signed_area(p[0], p[1], p[2]);
}

double triangle_diameter(const TriMesh& mesh, std::size_t t) {
  const auto p = mesh.corners_of(t);
  return std::max({distance(p[0], p[1]), distance(p[1], p[2]), distance(p[2], p[0])});
}

double mesh_area(const TriMesh& mesh) {
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) total += triangle_area(mesh, t);
  return total;
}

std::size_t count_edges(const TriMesh& mesh) {
  std::unordered_map<std::uint64_t, int> seen;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) seen.emplace(edge_key(tri[k], tri[(k + 1) % 3]), 0);
  }
  return seen.size();
}

void update_sizes(TriMesh& mesh) {
  mesh.h = 0.0;
  mesh.h_min = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const double d = triangle_diameter(mesh, t);
    mesh.h = std::max(mesh.h, d);
    mesh.h_min = std::min(mesh.h_min, d);
  }
}

void audit_mesh(const TriMesh& mesh) {
  const auto nv = static_cast<int>(mesh.vertices.size());
  if (mesh.boundary_marks.size() != mesh.vertices.size()) {
    throw MeshError("boundary marks do not match vertex count");
  }
  std::unordered_map<std::uint64_t, int> count;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (int v : mesh.triangles[t]) {
      if (v < 0 || v >= nv) throw MeshError("triangle " + std::to_string(t) + " has invalid vertex");
    }
    if (!(triangle_area(mesh, t) > 0.0)) {
      throw MeshError("triangle " + std::to_string(t) + " is degenerate or clockwise");
    }
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) ++count[edge_key(tri[k], tri[(k + 1) % 3])];
  }
  std::size_t single = 0;
  for (const auto& [key, c] : count) {
    if (c > 2) throw MeshError("edge shared by more than two triangles");
    if (c == 1) ++single;
  }
  if (single != mesh.boundary_edges.size()) throw MeshError("boundary edge list is inconsistent");
  for (const auto& e : mesh.boundary_edges) {
    auto it = count.find(edge_key(e.v[0], e.v[1]));
    if (it == count.end() || it->second != 1) throw MeshError("listed boundary edge is interior");
    for (int v : e.v) {
      if (mesh.boundary_marks[static_cast<std::size_t>(v)].kind == BoundaryKind::interior) {
        throw MeshError("boundary vertex tagged interior");
      }
    }
  }
}

std::vector<ReentrantCorner> detect_reentrant_corners(const TriMesh& mesh) {
  std::unordered_map<int, int> in_from, out_to;
  for (const auto& e : mesh.boundary_edges) {
    out_to[e.v[0]] = e.v[1];
    in_from[e.v[1]] = e.v[0];
  }
  std::vector<ReentrantCorner> corners;
  for (int v = 0; v < static_cast<int>(mesh.vertices.size()); ++v) {
    auto o = out_to.find(v);
    if (o == out_to.end()) continue;
    const Point2 p = mesh.vertices[static_cast<std::size_t>(v)];
    const Vec2 out = mesh.vertices[static_cast<std::size_t>(o->second)] - p;
    const Vec2 back = mesh.vertices[static_cast<std::size_t>(in_from.at(v))] - p;
    const double a_out = std::atan2(out.y, out.x);
    const double a_back = std::atan2(back.y, back.x);
    const double theta = wrap_angle(a_back - a_out);
    if (theta > kPi + 1e-9) {
      ReentrantCorner c;
      c.vertex = p;
      c.theta = theta;
      c.edge_angle = wrap_angle(a_out);
      c.bisector_angle = wrap_angle(a_out + 0.5 * theta);
      c.vertex_index = v;
      corners.push_back(c);
    }
  }
  return corners;
}

TriMesh build_l_shape() {
  CellSpec spec{-1.0, -1.0, 0.5, 4, 4,
                [](Point2 c) { return !(c.x > 0.0 && c.y < 0.0); },
                [](Point2 c) { return c.x * c.y > 0.0; }};
  TriMesh mesh = build_from_cells(spec);
  finalize(mesh);
  return mesh;
}

TriMesh build_notched_rectangle() {
  constexpr double cell = 0.25;
  const std::array<Point2, 3> hole{Point2{1.0, 1.0}, Point2{3.0, 1.0}, Point2{2.0, 2.0}};
  auto inside_hole = [&](Point2 c) {
    return signed_area(hole[0], hole[1], c) > 0.0 && signed_area(hole[1], hole[2], c) > 0.0 &&
           signed_area(hole[2], hole[0], c) > 0.0;
  };
  auto main_diagonal = [&](Point2 c) {
    const Point2* nearest = &hole[0];
    for (const auto& h : hole) {
      if (distance(c, h) < distance(c, *nearest) - 1e-12) nearest = &h;
    }
    return (c.x - nearest->x) * (c.y - nearest->y) > 0.0;
  };
  CellSpec spec{0.0, 0.0, cell, 16, 12, [&](Point2 c) { return !inside_hole(c); }, main_diagonal};
  TriMesh mesh = build_from_cells(spec);
  assign_boundary(mesh);
  // Pull patch vertices onto the circle of radius `cell` so every corner patch
  // is a fan of congruent isosceles triangles.
  const auto corners = detect_reentrant_corners(mesh);
  const auto adj = vertex_triangles(mesh);
  for (const auto& c : corners) {
    for (int t : adj[static_cast<std::size_t>(c.vertex_index)]) {
      for (int v : mesh.triangles[static_cast<std::size_t>(t)]) {
        if (v == c.vertex_index) continue;
        Point2& p = mesh.vertices[static_cast<std::size_t>(v)];
        const Vec2 d = p - c.vertex;
        p = c.vertex + (cell / norm(d)) * d;
      }
    }
  }
  finalize(mesh);
  return mesh;
}

TriMesh build_unit_square(int n) {
  if (n < 1) throw MeshError("unit square needs at least one cell per side");
  CellSpec spec{0.0, 0.0, 1.0 / n, n, n, [](Point2) { return true; },
                [](Point2 c) { return (c.x - 0.5) * (c.y - 0.5) > 0.0; }};
  TriMesh mesh = build_from_cells(spec);
  finalize(mesh);
  return mesh;
}

TriMesh uniform_refine(const TriMesh& mesh) {
  TriMesh out;
  out.vertices = mesh.vertices;
  out.boundary_marks = mesh.boundary_marks;
  out.corners = mesh.corners;
  out.level = mesh.level + 1;
  out.triangles.reserve(mesh.triangles.size() * 4);

  std::unordered_map<std::uint64_t, int> mid;
  mid.reserve(mesh.triangles.size() * 2);
  auto midpoint = [&](int a, int b) {
    auto [it, inserted] = mid.emplace(edge_key(a, b), static_cast<int>(out.vertices.size()));
    if (inserted) {
      const Point2 pa = mesh.vertices[static_cast<std::size_t>(a)];
      const Point2 pb = mesh.vertices[static_cast<std::size_t>(b)];
      out.vertices.push_back(0.5 * (pa + pb));
      out.boundary_marks.push_back({});
    }
    return it->second;
  };
  for (const auto& tri : mesh.triangles) {
    const int a = tri[0], b = tri[1], c = tri[2];
    const int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
    out.triangles.push_back({a, ab, ca});
    out.triangles.push_back({ab, b, bc});
    out.triangles.push_back({ca, bc, c});
    out.triangles.push_back({ab, bc, ca});
  }
  out.boundary_edges.reserve(mesh.boundary_edges.size() * 2);
  for (const auto& e : mesh.boundary_edges) {
    const int m = mid.at(edge_key(e.v[0], e.v[1]));
    out.boundary_marks[static_cast<std::size_t>(m)] = {e.kind, e.segment};
    out.boundary_edges.push_back({{e.v[0], m}, e.segment, e.kind});
    out.boundary_edges.push_back({{m, e.v[1]}, e.segment, e.kind});
  }
  update_sizes(out);
  return out;
}

TriMesh graded_refine(const TriMesh& mesh, int corner, double mu, double radius) {
  if (!(mu > 0.0 && mu <= 1.0)) throw MeshError("grading exponent must lie in (0, 1]");
  if (corner < 0 || corner >= static_cast<int>(mesh.corners.size())) {
    throw MeshError("unknown corner " + std::to_string(corner));
  }
  TriMesh base = mesh;
  if (!mesh.unmapped.empty()) base.vertices = mesh.unmapped;
  TriMesh out = uniform_refine(base);
  out.unmapped = out.vertices;
  const Point2 c = out.corners[static_cast<std::size_t>(corner)].vertex;
  const double power = 1.0 / mu - 1.0;
  for (auto& p : out.vertices) {
    const double r = distance(p, c);
    if (r > 0.0 && r < radius) p = c + std::pow(r / radius, power) * (p - c);
  }
  for (std::size_t t = 0; t < out.triangles.size(); ++t) {
    if (!(triangle_area(out, t) > 0.0)) {
      throw MeshError("grading inverted triangle " + std::to_string(t));
    }
  }
  update_sizes(out);
  return out;
}

CornerLayers corner_layers(const TriMesh& mesh, int corner, int layer_count) {
  if (layer_count < 1) throw MeshError("layer count must be at least 1");
  if (corner < 0 || corner >= static_cast<int>(mesh.corners.size())) {
    throw MeshError("unknown corner " + std::to_string(corner));
  }
  const auto adj = vertex_triangles(mesh);
  std::vector<bool> taken(mesh.triangles.size(), false);
  std::vector<bool> reached(mesh.vertices.size(), false);
  CornerLayers out;
  out.corner_index = corner;
  std::vector<int> front{mesh.corners[static_cast<std::size_t>(corner)].vertex_index};
  for (int k = 0; k < layer_count; ++k) {
    std::vector<int> layer;
    for (int v : front) {
      for (int t : adj[static_cast<std::size_t>(v)]) {
        if (!taken[static_cast<std::size_t>(t)]) {
          taken[static_cast<std::size_t>(t)] = true;
          layer.push_back(t);
        }
      }
    }
    if (layer.empty()) {
      throw MeshError("layer " + std::to_string(k + 1) + " is empty: mesh too coarse for " +
                      std::to_string(layer_count) + " layers");
    }
    std::sort(layer.begin(), layer.end());
    for (int v : front) reached[static_cast<std::size_t>(v)] = true;
    std::vector<int> next;
    for (int t : layer) {
      for (int v : mesh.triangles[static_cast<std::size_t>(t)]) {
        if (!reached[static_cast<std::size_t>(v)]) {
          reached[static_cast<std::size_t>(v)] = true;
          next.push_back(v);
        }
      }
    }
    out.layers.push_back(std::move(layer));
    front = std::move(next);
  }
  return out;
}

TriMesh corner_neighbourhood(const TriMesh& mesh, int corner, int rings) {
  if (rings < 1) throw MeshError("neighbourhood needs at least one ring");
  const auto layers = corner_layers(mesh, corner, rings);
  const Point2 center = mesh.corners.at(static_cast<std::size_t>(corner)).vertex;
  TriMesh sub;
  std::map<int, int> ids;
  for (const auto& layer : layers.layers) {
    for (int t : layer) {
      std::array<int, 3> tri{};
      for (std::size_t k = 0; k < 3; ++k) {
        const int v = mesh.triangles[static_cast<std::size_t>(t)][k];
        auto [it, inserted] = ids.emplace(v, static_cast<int>(sub.vertices.size()));
        if (inserted) sub.vertices.push_back(mesh.vertices[static_cast<std::size_t>(v)]);
        tri[k] = it->second;
      }
      sub.triangles.push_back(tri);
    }
  }
  finalize(sub);
  // keep only the centre among the detected corners
  std::erase_if(sub.corners, [&](const ReentrantCorner& c) { return !(c.vertex == center); });
  if (sub.corners.size() != 1) throw MeshError("corner is not re-entrant within its neighbourhood");
  return sub;
}

void write_tmesh(std::ostream& out, const TriMesh& mesh) {
  const auto old = out.precision(17);
  out << "tmesh v1 " << mesh.vertices.size() << ' ' << mesh.triangles.size() << ' '
      << mesh.corners.size() << '\n';
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const auto& m = mesh.boundary_marks[v];
    int tag = 0;
    if (m.kind == BoundaryKind::dirichlet) tag = m.segment + 1;
    if (m.kind == BoundaryKind::neumann) tag = -(m.segment + 1);
    out << mesh.vertices[v].x << ' ' << mesh.vertices[v].y << ' ' << tag << '\n';
  }
  for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& c : mesh.corners) {
    out << c.vertex_index << ' ' << c.theta << ' ' << c.bisector_angle << ' ' << c.edge_angle << '\n';
  }
  out.precision(old);
}

TriMesh read_tmesh(std::istream& in) {
  std::string magic, version;
  std::size_t nv = 0, nt = 0, nc = 0;
  if (!(in >> magic >> version >> nv >> nt >> nc) || magic != "tmesh" || version != "v1") {
    throw MeshError("not a tmesh v1 stream");
  }
  TriMesh mesh;
  mesh.vertices.resize(nv);
  mesh.boundary_marks.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    int tag = 0;
    if (!(in >> mesh.vertices[v].x >> mesh.vertices[v].y >> tag)) throw MeshError("truncated vertex block");
    if (tag > 0) mesh.boundary_marks[v] = {BoundaryKind::dirichlet, tag - 1};
    if (tag < 0) mesh.boundary_marks[v] = {BoundaryKind::neumann, -tag - 1};
  }
  mesh.triangles.resize(nt);
  for (auto& t : mesh.triangles) {
    if (!(in >> t[0] >> t[1] >> t[2])) throw MeshError("truncated triangle block");
  }
  for (const auto& e : free_edges(mesh)) {
    const auto& m = mesh.boundary_marks[static_cast<std::size_t>(e[0])];
    mesh.boundary_edges.push_back({e, m.segment, m.kind});
  }
  for (std::size_t k = 0; k < nc; ++k) {
    ReentrantCorner c;
    if (!(in >> c.vertex_index >> c.theta >> c.bisector_angle >> c.edge_angle)) {
      throw MeshError("truncated corner block");
    }
    c.vertex = mesh.vertices.at(static_cast<std::size_t>(c.vertex_index));
    mesh.corners.push_back(c);
  }
  update_sizes(mesh);
  audit_mesh(mesh);
  return mesh;
}

}  // namespace cornerheat
