#pragma once

// Jacobi-preconditioned Krylov solves for DiscreteOperator (Eigen CG / BiCGSTAB).

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include "homoglab/error.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/operator.hpp"

namespace homoglab {

inline constexpr double kDefaultTol = 1e-10;

struct SolveOptions {
  double tol = kDefaultTol;
  std::size_t max_iter = 0;  ///< 0: 20 * unknowns, at least 2000
};

struct SolveStats {
  double residual = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

inline void project_mean_zero_per_component(Eigen::VectorXd& b, int m) {
  const Eigen::Index n = b.size() / m;
  for (int a = 0; a < m; ++a) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += b(k * m + a);
    s /= static_cast<double>(n);
    for (Eigen::Index k = 0; k < n; ++k) b(k * m + a) -= s;
  }
}

inline void weighted_mean_zero(Eigen::VectorXd& u, const Eigen::VectorXd& mass, int m) {
  const Eigen::Index n = u.size() / m;
  for (int a = 0; a < m; ++a) {
    double s = 0.0, w = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      s += mass(k * m + a) * u(k * m + a);
      w += mass(k * m + a);
    }
    s /= w;
    for (Eigen::Index k = 0; k < n; ++k) u(k * m + a) -= s;
  }
}

template <class Solver>
Eigen::VectorXd run_krylov(const SparseMatrix& a, const Eigen::VectorXd& b, const SolveOptions& opts, SolveStats& stats) {
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    stats = {};
    return Eigen::VectorXd::Zero(b.size());
  }
  Solver solver;
  solver.setTolerance(opts.tol);
  const auto n = static_cast<std::size_t>(b.size());
  solver.setMaxIterations(static_cast<Eigen::Index>(opts.max_iter ? opts.max_iter : std::max<std::size_t>(2000, 20 * n)));
  solver.compute(a);
  Eigen::VectorXd x = solver.solve(b);
  stats.iterations = static_cast<std::size_t>(solver.iterations());
  stats.residual = (a * x - b).norm() / bnorm;
  // The recursively updated residual can drift from the true one; restart from the
  // current iterate a few times before giving up.
  for (int restart = 0; restart < 4 && solver.info() == Eigen::Success && x.allFinite() && stats.residual > opts.tol;
       ++restart) {
    x = solver.solveWithGuess(b, x);
    stats.iterations += static_cast<std::size_t>(solver.iterations());
    stats.residual = (a * x - b).norm() / bnorm;
  }
  if (!x.allFinite() || !(stats.residual <= opts.tol))
    throw SolverError("krylov solve did not converge", stats.residual, stats.iterations);
  return x;
}

}  // namespace detail

/// Solves the stiffness-form system S u = b on free dofs with u = boundary on fixed
/// dofs. For singular operators b is projected onto the range (zero sum per
/// component) and u is returned with zero mass-weighted mean per component.
inline Eigen::VectorXd solve_stiffness(const DiscreteOperator& op, Eigen::VectorXd b, const Eigen::VectorXd* boundary,
                                       const SolveOptions& opts = {}, SolveStats* stats_out = nullptr) {
  const auto n = static_cast<Eigen::Index>(op.size());
  if (b.size() != n) throw ValidationError("solve: rhs length does not match operator");
  if (!b.allFinite()) throw ValidationError("solve: rhs not finite");
  SolveStats stats;
  bool any_fixed = false;
  for (char f : op.fixed) any_fixed = any_fixed || f;

  Eigen::VectorXd u;
  if (!any_fixed) {
    if (op.singular) detail::project_mean_zero_per_component(b, op.components);
    if (op.symmetric)
      u = detail::run_krylov<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>>(op.stiffness, b, opts, stats);
    else
      u = detail::run_krylov<Eigen::BiCGSTAB<SparseMatrix>>(op.stiffness, b, opts, stats);
    if (op.singular) detail::weighted_mean_zero(u, op.mass, op.components);
  } else {
    if (boundary == nullptr || boundary->size() != n) throw ValidationError("solve: boundary values required");
    std::vector<Eigen::Index> map(static_cast<std::size_t>(n), -1);
    Eigen::Index nf = 0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (!op.fixed[static_cast<std::size_t>(k)]) map[static_cast<std::size_t>(k)] = nf++;
    Eigen::VectorXd bf(nf);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(op.stiffness.nonZeros()));
    for (Eigen::Index r = 0; r < n; ++r) {
      const Eigen::Index fr = map[static_cast<std::size_t>(r)];
      if (fr < 0) continue;
      double acc = b(r);
      for (SparseMatrix::InnerIterator it(op.stiffness, r); it; ++it) {
        const Eigen::Index fc = map[static_cast<std::size_t>(it.col())];
        if (fc >= 0)
          trip.emplace_back(fr, fc, it.value());
        else
          acc -= it.value() * (*boundary)(it.col());
      }
      bf(fr) = acc;
    }
    SparseMatrix a(nf, nf);
    a.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd uf;
    if (op.symmetric)
      uf = detail::run_krylov<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>>(a, bf, opts, stats);
    else
      uf = detail::run_krylov<Eigen::BiCGSTAB<SparseMatrix>>(a, bf, opts, stats);
    u = *boundary;
    for (Eigen::Index k = 0; k < n; ++k)
      if (map[static_cast<std::size_t>(k)] >= 0) u(k) = uf(map[static_cast<std::size_t>(k)]);
  }
  if (stats_out) *stats_out = stats;
  return u;
}

/// Solves op(u) = rhs with rhs in strong (pointwise) form; on Dirichlet-fixed dofs
/// the rhs entry is the prescribed value.
inline GridFunction krylov_solve(const DiscreteOperator& op, const Eigen::VectorXd& rhs, const SolveOptions& opts = {},
                                 SolveStats* stats = nullptr) {
  if (rhs.size() != static_cast<Eigen::Index>(op.size())) throw ValidationError("krylov_solve: rhs length mismatch");
  Eigen::VectorXd b = rhs.cwiseProduct(op.mass);
  Eigen::VectorXd u = solve_stiffness(op, b, &rhs, opts, stats);
  GridFunction out{op.grid, op.components, std::vector<double>(u.data(), u.data() + u.size())};
  return out;
}

inline Eigen::Map<const Eigen::VectorXd> as_vector(const GridFunction& f) {
  return {f.values.data(), static_cast<Eigen::Index>(f.values.size())};
}

}  // namespace homoglab
