#include "cornerheat/fem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cornerheat/errors.hpp"

namespace cornerheat {

std::array<Vec2, 3> p1_gradients(const std::array<Point2, 3>& tri) {
  const double two_area = cross(tri[1] - tri[0], tri[2] - tri[0]);
  const double scale = std::max({dot(tri[1] - tri[0], tri[1] - tri[0]), dot(tri[2] - tri[0], tri[2] - tri[0])});
  if (!(two_area > 1e-14 * scale)) throw MeshError("degenerate or clockwise triangle");
  const double inv = 1.0 / two_area;
  return {Vec2{(tri[1].y - tri[2].y) * inv, (tri[2].x - tri[1].x) * inv},
          Vec2{(tri[2].y - tri[0].y) * inv, (tri[0].x - tri[2].x) * inv},
          Vec2{(tri[0].y - tri[1].y) * inv, (tri[1].x - tri[0].x) * inv}};
}

std::array<std::array<double, 3>, 3> local_stiffness(const std::array<Point2, 3>& tri) {
  const auto g = p1_gradients(tri);
  const double area = signed_area(tri[0], tri[1], tri[2]);
  std::array<std::array<double, 3>, 3> k{};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) k[i][j] = area * dot(g[i], g[j]);
  }
  return k;
}

std::array<std::array<double, 3>, 3> local_mass(const std::array<Point2, 3>& tri) {
  const double area = signed_area(tri[0], tri[1], tri[2]);
  if (!(area > 0.0)) throw MeshError("degenerate or clockwise triangle");
  std::array<std::array<double, 3>, 3> m{};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) m[i][j] = area / 12.0 * (i == j ? 2.0 : 1.0);
  }
  return m;
}

namespace {

template <class LocalFn>
SparseMatrix assemble_over(const TriMesh& mesh, std::span<const int> triangles, LocalFn&& local) {
  std::vector<Triplet> trip;
  trip.reserve(triangles.size() * 9);
  for (int t : triangles) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    const auto k = local(mesh.corners_of(static_cast<std::size_t>(t)));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) trip.push_back({tri[i], tri[j], k[i][j]});
    }
  }
  const auto n = static_cast<int>(mesh.vertices.size());
  return SparseMatrix::from_triplets(n, n, trip);
}

std::vector<int> all_triangles(const TriMesh& mesh) {
  std::vector<int> ids(mesh.triangles.size());
  for (std::size_t t = 0; t < ids.size(); ++t) ids[t] = static_cast<int>(t);
  return ids;
}

}  // namespace

SparseMatrix assemble_stiffness(const TriMesh& mesh) {
  const auto ids = all_triangles(mesh);
  return assemble_stiffness(mesh, ids);
}

SparseMatrix assemble_stiffness(const TriMesh& mesh, std::span<const int> triangles) {
  return assemble_over(mesh, triangles, [](const std::array<Point2, 3>& p) { return local_stiffness(p); });
}

SparseMatrix assemble_mass(const TriMesh& mesh) {
  const auto ids = all_triangles(mesh);
  return assemble_over(mesh, ids, [](const std::array<Point2, 3>& p) { return local_mass(p); });
}

SparseMatrix assemble_advection(const TriMesh& mesh, Vec2 b) {
  const auto ids = all_triangles(mesh);
  return assemble_over(mesh, ids, [b](const std::array<Point2, 3>& p) {
    const auto g = p1_gradients(p);
    const double area = signed_area(p[0], p[1], p[2]);
    std::array<std::array<double, 3>, 3> k{};
    // int phi_i = area / 3 for every i
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) k[i][j] = area / 3.0 * dot(b, g[j]);
    }
    return k;
  });
}

DiagonalMatrix lump_mass(const SparseMatrix& mass) {
  DiagonalMatrix d{mass.row_sums()};
  for (double v : d.diag) {
    if (!(v > 0.0)) throw Error("lumped mass has a non-positive entry");
  }
  return d;
}

IntegrationOptions corner_integration(const TriMesh& mesh) {
  IntegrationOptions opt;
  for (const auto& c : mesh.corners) opt.singular_points.push_back(c.vertex);
  return opt;
}

SegmentOptions corner_segments(const TriMesh& mesh) {
  SegmentOptions opt;
  for (const auto& c : mesh.corners) opt.singular_points.push_back(c.vertex);
  return opt;
}

FieldVector assemble_load(const TriMesh& mesh, const TimeField& f, double t, const IntegrationOptions& options) {
  return assemble_load(mesh, [&](Point2 x) { return f(t, x); }, options);
}

FieldVector assemble_load(const TriMesh& mesh, const ScalarField& f, const IntegrationOptions& options) {
  FieldVector out(mesh.vertices.size(), 0.0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    std::array<double, 3> local{};
    for_each_quadrature_point(mesh.corners_of(t), options,
                              [&](Point2 x, const std::array<double, 3>& b, double w) {
                                const double v = f(x);
                                if (!std::isfinite(v)) {
                                  std::ostringstream msg;
                                  msg << "load is not finite at (" << x.x << ", " << x.y << ")";
                                  throw DomainError(msg.str());
                                }
                                for (std::size_t k = 0; k < 3; ++k) local[k] += w * v * b[k];
                              });
    for (std::size_t k = 0; k < 3; ++k) out[static_cast<std::size_t>(tri[k])] += local[k];
  }
  return out;
}

FieldVector energy_load(const TriMesh& mesh, const ScalarField& u, const SegmentOptions& options) {
  FieldVector out(mesh.vertices.size(), 0.0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto p = mesh.corners_of(t);
    Vec2 flux{0.0, 0.0};
    for (std::size_t e = 0; e < 3; ++e) {
      const Point2 a = p[e];
      const Point2 b = p[(e + 1) % 3];
      const Vec2 d = b - a;
      const Vec2 normal = (1.0 / norm(d)) * Vec2{d.y, -d.x};
      double integral = 0.0;
      for_each_segment_point(a, b, options, [&](Point2 x, double, double w) { integral += w * u(x); });
      flux = flux + integral * normal;
    }
    const auto g = p1_gradients(p);
    const auto& tri = mesh.triangles[t];
    for (std::size_t k = 0; k < 3; ++k) out[static_cast<std::size_t>(tri[k])] += dot(g[k], flux);
  }
  return out;
}

FieldVector interpolate(const TriMesh& mesh, const ScalarField& u) {
  FieldVector out(mesh.vertices.size());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = u(mesh.vertices[v]);
  return out;
}

DofSplit split_dofs(const TriMesh& mesh) {
  DofSplit s;
  for (int v = 0; v < static_cast<int>(mesh.vertices.size()); ++v) {
    (mesh.is_constrained(v) ? s.constrained : s.free).push_back(v);
  }
  return s;
}

ReducedSystem apply_dirichlet(const SparseMatrix& a, const FieldVector& rhs, const ScalarField& g,
                              const TriMesh& mesh) {
  const auto dofs = split_dofs(mesh);
  ReducedSystem sys;
  sys.free = dofs.free;
  sys.lift.assign(mesh.vertices.size(), 0.0);
  for (int v : dofs.constrained) sys.lift[static_cast<std::size_t>(v)] = g(mesh.vertices[static_cast<std::size_t>(v)]);
  const auto a_lift = a.multiply(sys.lift);
  sys.rhs.resize(dofs.free.size());
  for (std::size_t k = 0; k < dofs.free.size(); ++k) {
    const auto v = static_cast<std::size_t>(dofs.free[k]);
    sys.rhs[k] = rhs[v] - a_lift[v];
  }
  sys.matrix = a.extract(dofs.free, dofs.free);
  return sys;
}

FieldVector expand(const ReducedSystem& system, std::span<const double> reduced) {
  FieldVector full = system.lift;
  for (std::size_t k = 0; k < system.free.size(); ++k) full[static_cast<std::size_t>(system.free[k])] = reduced[k];
  return full;
}

FieldVector solve_spd(const SparseMatrix& a, std::span<const double> rhs, double tol, int max_iter,
                      SolveStats* stats, std::span<const double> guess) {
  const auto n = static_cast<std::size_t>(a.rows());
  FieldVector x(n, 0.0);
  if (!guess.empty()) std::copy(guess.begin(), guess.end(), x.begin());
  const double bnorm = norm2(rhs);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    if (stats) *stats = {0, 0.0};
    return x;
  }
  auto diag = a.diagonal();
  for (double& d : diag) {
    if (!(d > 0.0)) throw SolverError("matrix has a non-positive diagonal entry", 0, 1.0);
    d = 1.0 / d;
  }
  FieldVector r(n), z(n), p(n), q(n);
  a.multiply(x, q);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
  double rnorm = norm2(r);
  int it = 0;
  if (rnorm > tol * bnorm) {
    for (std::size_t i = 0; i < n; ++i) z[i] = diag[i] * r[i];
    p = z;
    double rz = dot(r, z);
    for (it = 1; it <= max_iter; ++it) {
      a.multiply(p, q);
      const double pq = dot(p, q);
      if (!(pq > 0.0)) throw SolverError("matrix is not positive definite", it, rnorm / bnorm);
      const double alpha = rz / pq;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * q[i];
      }
      rnorm = norm2(r);
      if (rnorm <= tol * bnorm) break;
      for (std::size_t i = 0; i < n; ++i) z[i] = diag[i] * r[i];
      const double rz_new = dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    if (it > max_iter) {
      std::ostringstream msg;
      msg << "CG did not converge in " << max_iter << " iterations (relative residual " << rnorm / bnorm << ")";
      throw SolverError(msg.str(), max_iter, rnorm / bnorm);
    }
  }
  if (stats) *stats = {it, rnorm / bnorm};
  return x;
}

double error_norm(const TriMesh& mesh, std::span<const double> v_h, const ScalarField& u_exact,
                  const NormSpec& spec, const IntegrationOptions& options, const VectorField& grad_exact) {
  if (spec.kind == NormKind::linf_nodal) {
    double m = 0.0;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      m = std::max(m, std::abs(u_exact(mesh.vertices[v]) - v_h[v]));
    }
    return m;
  }
  if (spec.kind == NormKind::weighted_l2 && !(spec.alpha >= 0.0 && spec.alpha < 1.0)) {
    throw Error("weight exponent must lie in [0, 1)");
  }
  if (spec.kind == NormKind::h1_semi && !grad_exact) throw Error("h1_semi norm needs the exact gradient");
  const bool needs_corner = spec.kind == NormKind::weighted_l2 || spec.exclude_radius > 0.0;
  if (needs_corner && (spec.corner < 0 || spec.corner >= static_cast<int>(mesh.corners.size()))) {
    throw Error("norm refers to an unknown corner");
  }
  const Point2 c = needs_corner ? mesh.corners[static_cast<std::size_t>(spec.corner)].vertex : Point2{};
  IntegrationOptions opt = options;
  if (spec.exclude_radius > 0.0) opt.circles.push_back({c, spec.exclude_radius});

  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const std::array<double, 3> vals{v_h[static_cast<std::size_t>(tri[0])], v_h[static_cast<std::size_t>(tri[1])],
                                     v_h[static_cast<std::size_t>(tri[2])]};
    const auto p = mesh.corners_of(t);
    Vec2 grad_h{0.0, 0.0};
    if (spec.kind == NormKind::h1_semi) {
      const auto g = p1_gradients(p);
      for (std::size_t k = 0; k < 3; ++k) grad_h = grad_h + vals[k] * g[k];
    }
    for_each_quadrature_point(p, opt, [&](Point2 x, const std::array<double, 3>& b, double w) {
      if (spec.exclude_radius > 0.0 && distance(x, c) <= spec.exclude_radius) return;
      if (spec.kind == NormKind::h1_semi) {
        const Vec2 e = grad_exact(x) - grad_h;
        total += w * dot(e, e);
        return;
      }
      const double e = u_exact(x) - (b[0] * vals[0] + b[1] * vals[1] + b[2] * vals[2]);
      double weight = 1.0;
      if (spec.kind == NormKind::weighted_l2 && spec.alpha > 0.0) weight = std::pow(distance(x, c), 2.0 * spec.alpha);
      total += w * weight * e * e;
    });
  }
  return std::sqrt(total);
}

}  // namespace cornerheat
