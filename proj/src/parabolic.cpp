#include "cornerheat/parabolic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "cornerheat/errors.hpp"

namespace cornerheat {

TimeGrid::TimeGrid(double end, long steps) : t_end(end), n_steps(steps) {
  if (steps < 1) throw Error("time grid needs at least one step");
  if (!(end > 0.0)) throw Error("final time must be positive");
}

namespace {

const TriMesh& mesh_of(const ParabolicProblem& p) {
  if (p.mesh == nullptr) throw Error("parabolic problem has no mesh");
  return *p.mesh;
}

bool has_advection(const ParabolicProblem& p) { return p.advection.x != 0.0 || p.advection.y != 0.0; }

void set_boundary(const ParabolicProblem& p, const DofSplit& dofs, double t, std::span<double> state) {
  const auto& mesh = mesh_of(p);
  for (int v : dofs.constrained) {
    const auto i = static_cast<std::size_t>(v);
    state[i] = p.g ? p.g(t, mesh.vertices[i]) : 0.0;
  }
}

void check_finite(std::span<const double> state, long step) {
  for (double v : state) {
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "non-finite state at step " << step;
      throw InstabilityError(msg.str(), step);
    }
  }
}

double linf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// F - A u on the free rows, zero on constrained rows.
FieldVector residual(const FieldVector& f, const SparseMatrix& a, std::span<const double> u, const DofSplit& dofs) {
  FieldVector r(u.size(), 0.0);
  for (int v : dofs.free) {
    const auto i = static_cast<std::size_t>(v);
    r[i] = f[i] - a.row_dot(v, u);
  }
  return r;
}

}  // namespace

Operators::Operators(const ParabolicProblem& problem, const SchemeConfig& scheme) : scheme_(scheme) {
  const auto& mesh = mesh_of(problem);
  if (!(scheme.cfl_safety > 0.0 && scheme.cfl_safety <= 1.0)) throw Error("cfl_safety must lie in (0, 1]");
  if (scheme.kind == SchemeKind::crank_nicolson && has_advection(problem)) {
    throw Error("Crank-Nicolson does not support advection");
  }
  stiffness_ = modified_stiffness(mesh, problem.corrections);
  system_ = has_advection(problem) ? combine(1.0, stiffness_, 1.0, assemble_advection(mesh, problem.advection))
                                   : stiffness_;
  mass_ = assemble_mass(mesh);
  lumped_ = lump_mass(mass_);
  dofs_ = split_dofs(mesh);
  if (scheme.mass == MassKind::consistent) mass_free_ = mass_.extract(dofs_.free, dofs_.free);
}

const FieldVector& Operators::load(const ParabolicProblem& problem, double t) {
  for (const auto& c : cache_) {
    if (c.t == t) return c.f;
  }
  const auto& mesh = mesh_of(problem);
  FieldVector f = problem.f ? assemble_load(mesh, problem.f, t, problem.load_options)
                            : FieldVector(mesh.num_vertices(), 0.0);
  for (const auto& s : problem.separable) {
    if (s.load.size() != f.size()) throw Error("separable load has the wrong size");
    const double a = s.amplitude(t);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += a * s.load[i];
  }
  if (cache_.size() == 2) cache_.erase(cache_.begin());
  cache_.push_back({t, std::move(f)});
  return cache_.back().f;
}

FieldVector Operators::apply_inverse_mass(std::span<const double> r) const {
  FieldVector out(r.size(), 0.0);
  if (scheme_.mass == MassKind::lumped) {
    for (int v : dofs_.free) {
      const auto i = static_cast<std::size_t>(v);
      out[i] = r[i] / lumped_.diag[i];
    }
    return out;
  }
  FieldVector rf(dofs_.free.size());
  for (std::size_t k = 0; k < rf.size(); ++k) rf[k] = r[static_cast<std::size_t>(dofs_.free[k])];
  const auto x = solve_spd(mass_free_, rf, scheme_.solver_tol);
  for (std::size_t k = 0; k < x.size(); ++k) out[static_cast<std::size_t>(dofs_.free[k])] = x[k];
  return out;
}

const SparseMatrix& Operators::cn_matrix(double dt) {
  if (dt != cn_dt_) {
    if (scheme_.mass == MassKind::lumped) {
      std::vector<Triplet> trip;
      for (std::size_t i = 0; i < lumped_.diag.size(); ++i) {
        trip.push_back({static_cast<int>(i), static_cast<int>(i), lumped_.diag[i]});
      }
      const auto n = static_cast<int>(lumped_.diag.size());
      cn_ = combine(1.0, SparseMatrix::from_triplets(n, n, trip), 0.5 * dt, stiffness_);
    } else {
      cn_ = combine(1.0, mass_, 0.5 * dt, stiffness_);
    }
    cn_dt_ = dt;
  }
  return cn_;
}

double cfl_max_dt(const DiagonalMatrix& lumped, const SparseMatrix& stiffness, std::span<const int> free_dofs,
                  double tol, int max_iter) {
  const std::size_t n = free_dofs.size();
  if (n == 0) throw Error("no free dofs for the CFL estimate");
  if (lumped.size() != static_cast<std::size_t>(stiffness.rows())) throw Error("mass and stiffness sizes differ");
  const auto a = stiffness.extract(free_dofs, free_dofs);
  FieldVector inv_sqrt(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double m = lumped.diag[static_cast<std::size_t>(free_dofs[k])];
    if (!(m > 0.0)) throw Error("lumped mass must be positive");
    inv_sqrt[k] = 1.0 / std::sqrt(m);
  }
  // Deterministic start with components in every direction.
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  FieldVector v(n), w(n), tmp(n);
  for (auto& x : v) x = dist(rng);
  double nv = norm2(v);
  for (auto& x : v) x /= nv;

  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t k = 0; k < n; ++k) tmp[k] = inv_sqrt[k] * v[k];
    a.multiply(tmp, w);
    for (std::size_t k = 0; k < n; ++k) w[k] *= inv_sqrt[k];
    const double next = dot(v, w);
    nv = norm2(w);
    if (!(nv > 0.0) || !std::isfinite(nv)) throw Error("power iteration broke down");
    for (std::size_t k = 0; k < n; ++k) v[k] = w[k] / nv;
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) return 2.0 / next;
    lambda = next;
  }
  throw Error("power iteration did not converge");
}

double cfl_max_dt(const DiagonalMatrix& lumped, const SparseMatrix& stiffness) {
  std::vector<int> all(lumped.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return cfl_max_dt(lumped, stiffness, all);
}

FieldVector step_explicit_euler(std::span<const double> state, double t_n, double dt, const ParabolicProblem& problem,
                                Operators& ops) {
  const auto& f = ops.load(problem, t_n);
  const auto k = ops.apply_inverse_mass(residual(f, ops.system(), state, ops.dofs()));
  FieldVector next(state.begin(), state.end());
  for (int v : ops.dofs().free) next[static_cast<std::size_t>(v)] += dt * k[static_cast<std::size_t>(v)];
  set_boundary(problem, ops.dofs(), t_n + dt, next);
  return next;
}

FieldVector step_heun(std::span<const double> state, double t_n, double dt, const ParabolicProblem& problem,
                      Operators& ops) {
  const auto k1 = ops.apply_inverse_mass(residual(ops.load(problem, t_n), ops.system(), state, ops.dofs()));
  FieldVector pred(state.begin(), state.end());
  for (int v : ops.dofs().free) pred[static_cast<std::size_t>(v)] += dt * k1[static_cast<std::size_t>(v)];
  set_boundary(problem, ops.dofs(), t_n + dt, pred);
  const auto k2 = ops.apply_inverse_mass(residual(ops.load(problem, t_n + dt), ops.system(), pred, ops.dofs()));
  FieldVector next(state.begin(), state.end());
  for (int v : ops.dofs().free) {
    const auto i = static_cast<std::size_t>(v);
    next[i] += 0.5 * dt * (k1[i] + k2[i]);
  }
  set_boundary(problem, ops.dofs(), t_n + dt, next);
  return next;
}

FieldVector step_crank_nicolson(std::span<const double> state, double t_n, double dt, const ParabolicProblem& problem,
                                Operators& ops) {
  if (has_advection(problem)) throw Error("Crank-Nicolson does not support advection");
  const auto& mesh = mesh_of(problem);
  const FieldVector f0 = ops.load(problem, t_n);
  const FieldVector& f1 = ops.load(problem, t_n + dt);
  // rhs = (M - dt/2 S) U + dt/2 (F0 + F1) = M_cn U - dt S U + dt/2 (F0 + F1)
  const auto& lhs = ops.cn_matrix(dt);
  const auto mu = lhs.multiply(state);
  const auto su = ops.stiffness().multiply(state);
  FieldVector rhs(state.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = mu[i] - dt * su[i] + 0.5 * dt * (f0[i] + f1[i]);
  const double t1 = t_n + dt;
  const auto sys = apply_dirichlet(lhs, rhs,
                                   [&](Point2 x) { return problem.g ? problem.g(t1, x) : 0.0; }, mesh);
  FieldVector guess(sys.free.size());
  for (std::size_t k = 0; k < guess.size(); ++k) guess[k] = state[static_cast<std::size_t>(sys.free[k])];
  const auto x = solve_spd(sys.matrix, sys.rhs, ops.scheme().solver_tol, 20000, nullptr, guess);
  return expand(sys, x);
}

void RunResult::write_csv(std::ostream& out) const {
  out << "step,t";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  const auto old = out.precision(12);
  for (const auto& r : rows) {
    out << r.step << ',' << r.t;
    for (const auto& v : r.values) {
      out << ',';
      if (v) out << *v;
    }
    out << '\n';
  }
  out.precision(old);
}

FieldVector initial_state(const ParabolicProblem& problem) {
  const auto& mesh = mesh_of(problem);
  if (problem.initial_state) {
    if (problem.initial_state->size() != mesh.num_vertices()) throw Error("initial state has the wrong size");
    return *problem.initial_state;
  }
  if (!problem.u0) return FieldVector(mesh.num_vertices(), 0.0);
  if (!problem.corrections.empty()) {
    const ScalarField g0 = [&](Point2 x) { return problem.g ? problem.g(0.0, x) : 0.0; };
    return modified_ritz(mesh, problem.corrections, problem.u0, g0);
  }
  return interpolate(mesh, problem.u0);
}

RunResult run(const ParabolicProblem& problem, const SchemeConfig& scheme, const TimeGrid& grid,
              const std::vector<Observer>& observers) {
  const auto& mesh = mesh_of(problem);
  if (grid.n_steps < 1) throw Error("time grid needs at least one step");
  Operators ops(problem, scheme);
  const double dt = grid.dt();
  RunResult result;

  const bool explicit_kind = scheme.kind != SchemeKind::crank_nicolson;
  if (explicit_kind && scheme.mass == MassKind::lumped && scheme.enforce_cfl) {
    result.dt_max = cfl_max_dt(ops.lumped(), ops.stiffness(), ops.dofs().free);
    if (dt > scheme.cfl_safety * result.dt_max) {
      std::ostringstream msg;
      msg << "time step " << dt << " exceeds " << scheme.cfl_safety << " * dt_max = " << result.dt_max;
      throw Error(msg.str());
    }
  }

  FieldVector u = initial_state(problem);
  if (problem.g && problem.u0 && !problem.initial_state) {
    for (int v : ops.dofs().constrained) {
      const auto i = static_cast<std::size_t>(v);
      if (std::abs(problem.g(0.0, mesh.vertices[i]) - problem.u0(mesh.vertices[i])) > 1e-10) {
        throw Error("boundary data is inconsistent with the initial condition");
      }
    }
  }
  set_boundary(problem, ops.dofs(), 0.0, u);

  double ref = std::max(1.0, linf(u));
  if (problem.g) {
    for (int v : ops.dofs().constrained) {
      ref = std::max(ref, std::abs(problem.g(0.0, mesh.vertices[static_cast<std::size_t>(v)])));
    }
  }
  const double limit = scheme.growth_limit * ref;

  for (const auto& o : observers) result.columns.push_back(o.column);
  const auto observe = [&](long n, double t, const FieldVector& state) {
    if (observers.empty()) return;
    ObserverRow row{n, t, {}};
    bool any = false;
    for (const auto& o : observers) {
      if (o.every > 0 && (n % o.every == 0 || n == grid.n_steps)) {
        row.values.emplace_back(o.fn(n, t, state));
        any = true;
      } else {
        row.values.emplace_back(std::nullopt);
      }
    }
    if (any) result.rows.push_back(std::move(row));
  };
  observe(0, 0.0, u);

  const auto start = std::chrono::steady_clock::now();
  result.previous = u;
  for (long n = 0; n < grid.n_steps; ++n) {
    const double t = grid.t(n);
    FieldVector next;
    switch (scheme.kind) {
      case SchemeKind::explicit_euler:
        next = step_explicit_euler(u, t, dt, problem, ops);
        break;
      case SchemeKind::heun:
        next = step_heun(u, t, dt, problem, ops);
        break;
      case SchemeKind::crank_nicolson:
        next = step_crank_nicolson(u, t, dt, problem, ops);
        break;
    }
    check_finite(next, n + 1);
    if (linf(next) > limit) {
      std::ostringstream msg;
      msg << "state norm exceeded " << limit << " at step " << n + 1;
      throw InstabilityError(msg.str(), n + 1);
    }
    result.previous = std::move(u);
    u = std::move(next);
    observe(n + 1, grid.t(n + 1), u);
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.state = std::move(u);
  return result;
}

Observer linf_observer() {
  return {"linf", [](long, double, std::span<const double> s) { return linf(s); }, 1};
}

Observer l2_error_observer(const TriMesh& mesh, TimeField exact, IntegrationOptions options) {
  return {"l2_err",
          [&mesh, exact = std::move(exact), options = std::move(options)](long, double t, std::span<const double> s) {
            return error_norm(mesh, s, [&](Point2 x) { return exact(t, x); }, {NormKind::l2}, options);
          },
          1};
}

Observer weighted_error_observer(const TriMesh& mesh, TimeField exact, double alpha, IntegrationOptions options) {
  return {"weighted_err",
          [&mesh, exact = std::move(exact), alpha, options = std::move(options)](long, double t,
                                                                                 std::span<const double> s) {
            NormSpec spec{NormKind::weighted_l2, alpha, 0, 0.0};
            return error_norm(mesh, s, [&](Point2 x) { return exact(t, x); }, spec, options);
          },
          1};
}

double lumped_norm(const DiagonalMatrix& lumped, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += lumped.diag[i] * v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace cornerheat
