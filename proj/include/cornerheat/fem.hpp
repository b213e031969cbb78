#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "cornerheat/geometry.hpp"
#include "cornerheat/quadrature.hpp"
#include "cornerheat/sparse.hpp"

namespace cornerheat {

using ScalarField = std::function<double(Point2)>;
using TimeField = std::function<double(double, Point2)>;
using VectorField = std::function<Vec2(Point2)>;

/// Gradients of the three P1 hat functions on a triangle (constant).
std::array<Vec2, 3> p1_gradients(const std::array<Point2, 3>& tri);

/// Local matrices for a single triangle.
std::array<std::array<double, 3>, 3> local_stiffness(const std::array<Point2, 3>& tri);
std::array<std::array<double, 3>, 3> local_mass(const std::array<Point2, 3>& tri);

SparseMatrix assemble_stiffness(const TriMesh& mesh);
/// Stiffness restricted to a set of triangles.
SparseMatrix assemble_stiffness(const TriMesh& mesh, std::span<const int> triangles);
SparseMatrix assemble_mass(const TriMesh& mesh);
/// B_ij = int (b . grad phi_j) phi_i
SparseMatrix assemble_advection(const TriMesh& mesh, Vec2 b);

/// Row sums of a P1 mass matrix.
DiagonalMatrix lump_mass(const SparseMatrix& mass);

/// Integration options suited to fields that are singular at the mesh's
/// re-entrant corners.
IntegrationOptions corner_integration(const TriMesh& mesh);

/// F_i = int f(t, .) phi_i. Throws DomainError on non-finite integrand values.
FieldVector assemble_load(const TriMesh& mesh, const TimeField& f, double t, const IntegrationOptions& options);
FieldVector assemble_load(const TriMesh& mesh, const ScalarField& f, const IntegrationOptions& options);

/// a(u, phi_i) for every vertex, using int_T grad u = sum_e n_e int_e u ds on
/// each triangle so only values of u are needed.
FieldVector energy_load(const TriMesh& mesh, const ScalarField& u, const SegmentOptions& options);
SegmentOptions corner_segments(const TriMesh& mesh);

FieldVector interpolate(const TriMesh& mesh, const ScalarField& u);

/// Free (unconstrained) and constrained vertex lists.
struct DofSplit {
  std::vector<int> free;
  std::vector<int> constrained;
};
DofSplit split_dofs(const TriMesh& mesh);

/// System acting on free dofs after eliminating Dirichlet values.
struct ReducedSystem {
  SparseMatrix matrix;     // A restricted to free rows/cols
  FieldVector rhs;         // rhs_f - A_fc g_c
  std::vector<int> free;   // vertex id of each reduced unknown
  FieldVector lift;        // full-length vector, g on constrained dofs, 0 elsewhere
};

ReducedSystem apply_dirichlet(const SparseMatrix& a, const FieldVector& rhs, const ScalarField& g,
                              const TriMesh& mesh);

/// Full-length vector from reduced unknowns and the lift.
FieldVector expand(const ReducedSystem& system, std::span<const double> reduced);

struct SolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients. Throws SolverError when the
/// relative residual tolerance is not met within max_iter iterations.
FieldVector solve_spd(const SparseMatrix& a, std::span<const double> rhs, double tol = 1e-10,
                      int max_iter = 20000, SolveStats* stats = nullptr, std::span<const double> guess = {});

enum class NormKind { l2, weighted_l2, h1_semi, linf_nodal };

struct NormSpec {
  NormKind kind = NormKind::l2;
  double alpha = 0.0;  // weight r^alpha for weighted_l2
  int corner = 0;
  /// Only integrate where the distance to the corner exceeds this radius.
  double exclude_radius = 0.0;
};

/// || u_exact - v_h || in the requested norm. h1_semi needs grad_exact.
double error_norm(const TriMesh& mesh, std::span<const double> v_h, const ScalarField& u_exact,
                  const NormSpec& spec, const IntegrationOptions& options, const VectorField& grad_exact = {});

}  // namespace cornerheat
