#pragma once

// Dirichlet / Neumann boundary-value problems for L_eps and L_0 on rectangles.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "homoglab/error.hpp"
#include "homoglab/field.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/krylov.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/operator.hpp"

namespace homoglab {

/// f(x) -> out (m values)
using PointFn = std::function<void(std::span<const double> x, std::span<double> out)>;
/// g(x, outward normal) -> out (m values)
using BoundaryFn = std::function<void(std::span<const double> x, std::span<const double> normal, std::span<double> out)>;

struct BVPSpec {
  TensorField field;
  double epsilon = 0.0;                 ///< 0: homogenized problem with `effective`
  std::optional<CoefTensor> effective;  ///< required when epsilon == 0
  std::vector<double> origin{0.0, 0.0};
  std::vector<double> side{1.0, 1.0};
  int n = 64;  ///< cells per axis
  BoundaryKind bc = BoundaryKind::dirichlet;
  PointFn dirichlet;  ///< boundary values f
  BoundaryFn neumann; ///< conormal data g = n . A grad u
  PointFn source;     ///< F; empty means 0
  double tol = kDefaultTol;
  bool override_resolution = false;
  double compatibility_tol = 1e-8;

  Grid grid() const { return Grid::rectangle(origin, side, n); }
};

namespace detail {

inline void eval_into(const PointFn& fn, std::span<const double> x, std::span<double> out) {
  if (fn)
    fn(x, out);
  else
    std::fill(out.begin(), out.end(), 0.0);
}

inline DiscreteOperator bvp_operator(const BVPSpec& s, const Grid& g) {
  if (s.epsilon < 0.0) throw ValidationError("BVP: epsilon must be >= 0");
  if (s.epsilon == 0.0) {
    if (!s.effective) throw ValidationError("BVP: epsilon = 0 needs an effective tensor");
    return assemble(TensorField(*s.effective, {}, s.field.mu()), g, 1.0, 0.0, s.bc);
  }
  return assemble(s.field, g, s.epsilon, 0.0, s.bc, {s.override_resolution});
}

}  // namespace detail

/// Boundary flux vector for Neumann data: entry (node, alpha) is the integral of g^alpha
/// over the node's share of the boundary (trapezoid weights, one term per boundary
/// face the node touches, each with its own outward normal).
inline Eigen::VectorXd neumann_load(const Grid& g, int m, const BoundaryFn& gfn) {
  const int d = g.dim();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.node_count() * static_cast<std::size_t>(m)));
  std::vector<double> x(static_cast<std::size_t>(d)), normal(static_cast<std::size_t>(d)), out(static_cast<std::size_t>(m));
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    if (!g.on_boundary(k)) continue;
    g.coords(k, x);
    for (int a = 0; a < d; ++a) {
      if (!g.on_boundary(k, a)) continue;
      double meas = 1.0;
      for (int l = 0; l < d; ++l)
        if (l != a) meas *= g.h(l) * g.trapezoid(k, l);
      std::fill(normal.begin(), normal.end(), 0.0);
      normal[static_cast<std::size_t>(a)] = g.coord_index(k, a) == 0 ? -1.0 : 1.0;
      gfn(x, normal, out);
      for (int c = 0; c < m; ++c) b(static_cast<Eigen::Index>(k * static_cast<std::size_t>(m) + static_cast<std::size_t>(c))) += meas * out[static_cast<std::size_t>(c)];
    }
  }
  return b;
}

/// Solves the BVP. Dirichlet: boundary nodes take f. Neumann: compatibility
/// int F + int g = 0 is checked first and the solution is returned with zero mean.
inline GridFunction solve_bvp(const BVPSpec& s, SolveStats* stats = nullptr) {
  const Grid g = s.grid();
  const int d = g.dim();
  const int m = s.field.systems();
  if (s.field.dim() != d) throw ValidationError("BVP: field and domain dimensions differ");
  if (s.bc == BoundaryKind::periodic) throw ValidationError("BVP: boundary condition must be dirichlet or neumann");
  const DiscreteOperator op = detail::bvp_operator(s, g);

  std::vector<double> x(static_cast<std::size_t>(d));
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(op.size()));
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    g.coords(k, x);
    std::span<double> out(rhs.data() + k * static_cast<std::size_t>(m), static_cast<std::size_t>(m));
    if (s.bc == BoundaryKind::dirichlet && g.on_boundary(k)) {
      if (!s.dirichlet) throw ValidationError("BVP: Dirichlet data missing");
      s.dirichlet(x, out);
    } else {
      detail::eval_into(s.source, x, out);
    }
  }
  if (!rhs.allFinite()) throw ValidationError("BVP: data not finite");

  if (s.bc == BoundaryKind::dirichlet) return krylov_solve(op, rhs, {s.tol, 0}, stats);

  if (!s.neumann) throw ValidationError("BVP: Neumann data missing");
  Eigen::VectorXd b = rhs.cwiseProduct(op.mass);
  const Eigen::VectorXd flux = neumann_load(g, m, s.neumann);
  for (int c = 0; c < m; ++c) {
    double total = 0.0, scale = 0.0;
    for (Eigen::Index k = c; k < b.size(); k += m) {
      total += b(k) + flux(k);
      scale += std::abs(b(k)) + std::abs(flux(k));
    }
    if (std::abs(total) > s.compatibility_tol * std::max(scale, 1e-300))
      throw ValidationError("BVP: Neumann data incompatible (int F + int g = " + std::to_string(total) + ")");
  }
  b += flux;
  Eigen::VectorXd u = solve_stiffness(op, b, nullptr, {s.tol, 0}, stats);
  return GridFunction(g, m, std::vector<double>(u.data(), u.data() + u.size()));
}

}  // namespace homoglab
