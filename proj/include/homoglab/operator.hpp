#pragma once

// Conservative finite-difference discretization of -div(A(x/eps) grad u) + c u.
//
// The operator is assembled from the discrete bilinear form
//
//   B(v, u) = sum_i sum_{faces f normal to e_i} w_f sum_{ab} [ a_ii^ab g_i(v^a) g_i(u^b)
//             + 1/2 sum_{j != i} ( a_ij^ab g_i(v^a) g_j(u^b) + a_ji^ab g_j(v^a) g_i(u^b) ) ]
//
// where A is sampled at the face midpoint, g_i is the difference across the face and
// g_j (j != i) is the average of the centered j-differences at the two face nodes
// (one-sided on non-periodic boundaries). w_f is the face's dual volume with trapezoid
// factors on boundary planes. The stiffness matrix is symmetric whenever
// a_ij^ab = a_ji^ba, constants are in its kernel, and dividing a row by the node's
// dual volume gives the strong-form operator. Neumann data enter as boundary fluxes
// on the dual cells (the ghost-flux formulation of a vertex-centered scheme).

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "homoglab/error.hpp"
#include "homoglab/field.hpp"
#include "homoglab/grid.hpp"

namespace homoglab {

enum class BoundaryKind { periodic, dirichlet, neumann };

inline std::string to_string(BoundaryKind bc) {
  switch (bc) {
    case BoundaryKind::periodic: return "periodic";
    case BoundaryKind::dirichlet: return "dirichlet";
    case BoundaryKind::neumann: return "neumann";
  }
  return "unknown";
}

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Assembled operator over all nodes. Rows/columns are dofs node*m + alpha.
struct DiscreteOperator {
  Grid grid;
  int components = 1;
  BoundaryKind bc = BoundaryKind::periodic;
  double zero_order = 0.0;
  SparseMatrix stiffness;     ///< B(v,u) + zero_order * (lumped mass)
  Eigen::VectorXd mass;       ///< dual volume per dof
  std::vector<char> fixed;    ///< Dirichlet-eliminated dofs
  bool symmetric = true;
  bool singular = false;      ///< constants per component span the kernel

  std::size_t size() const noexcept { return static_cast<std::size_t>(mass.size()); }

  /// Strong-form application: (S u)/mass on free dofs, identity on fixed dofs.
  Eigen::VectorXd apply(const Eigen::VectorXd& u) const {
    Eigen::VectorXd y = stiffness * u;
    for (Eigen::Index k = 0; k < y.size(); ++k) y(k) = fixed[static_cast<std::size_t>(k)] ? u(k) : y(k) / mass(k);
    return y;
  }
};

struct AssembleOptions {
  bool override_resolution = false;
};

namespace detail {

/// Up to four (node, weight) pairs.
struct Stencil {
  int count = 0;
  std::array<std::size_t, 4> node{};
  std::array<double, 4> coef{};
  void add(std::size_t n, double c) {
    node[static_cast<std::size_t>(count)] = n;
    coef[static_cast<std::size_t>(count)] = c;
    ++count;
  }
};

struct Face {
  int axis = 0;
  std::size_t lo = 0;  ///< node k
  std::size_t hi = 0;  ///< node k + e_axis
  double weight = 0.0;
  std::span<const double> coef;       ///< A at the face midpoint, CoefTensor layout
  std::array<Stencil, 3> gradient{};  ///< face gradient stencils per direction
};

inline void centered_stencil(const Grid& g, std::size_t node, int axis, double scale, Stencil& s) {
  const long up = g.neighbor(node, axis, +1);
  const long dn = g.neighbor(node, axis, -1);
  const double h = g.h(axis);
  if (up >= 0 && dn >= 0) {
    s.add(static_cast<std::size_t>(up), scale / (2.0 * h));
    s.add(static_cast<std::size_t>(dn), -scale / (2.0 * h));
  } else if (up >= 0) {
    s.add(static_cast<std::size_t>(up), scale / h);
    s.add(node, -scale / h);
  } else {
    s.add(node, scale / h);
    s.add(static_cast<std::size_t>(dn), -scale / h);
  }
}

/// Calls fn(const Face&) for every face of the grid, with A(x_f / eps) sampled at midpoints.
template <class Fn>
void for_each_face(const TensorField& field, const Grid& grid, double eps, Fn&& fn) {
  const int d = grid.dim();
  if (d > 3) throw ValidationError("assembly supports d <= 3");
  std::vector<double> x(static_cast<std::size_t>(d));
  std::vector<double> coef(field.mean().size());
  double hprod = 1.0;
  for (int i = 0; i < d; ++i) hprod *= grid.h(i);
  Face face;
  for (int axis = 0; axis < d; ++axis) {
    face.axis = axis;
    for (std::size_t k = 0; k < grid.node_count(); ++k) {
      const long hi = grid.neighbor(k, axis, +1);
      if (hi < 0) continue;
      face.lo = k;
      face.hi = static_cast<std::size_t>(hi);
      double w = hprod;
      for (int l = 0; l < d; ++l)
        if (l != axis) w *= grid.trapezoid(k, l);
      face.weight = w;
      grid.coords(k, x);
      x[static_cast<std::size_t>(axis)] += 0.5 * grid.h(axis);
      for (double& xv : x) xv /= eps;
      field.evaluate_into(x, coef);
      face.coef = coef;
      for (int j = 0; j < d; ++j) {
        Stencil& s = face.gradient[static_cast<std::size_t>(j)];
        s.count = 0;
        if (j == axis) {
          s.add(face.hi, 1.0 / grid.h(axis));
          s.add(face.lo, -1.0 / grid.h(axis));
        } else {
          centered_stencil(grid, face.lo, j, 0.5, s);
          centered_stencil(grid, face.hi, j, 0.5, s);
        }
      }
      fn(static_cast<const Face&>(face));
    }
  }
}

/// Face-family coefficient c_{pq}^{ab}: a_ii for p=q=i, a_ij/2 and a_ji/2 for the
/// mixed pairs involving the face axis i, zero otherwise.
inline double family_coef(const Face& f, int d, int m, int p, int q, int a, int b) noexcept {
  const int i = f.axis;
  auto at = [&](int r, int s) { return f.coef[static_cast<std::size_t>(((r * d + s) * m + a) * m + b)]; };
  if (p == i && q == i) return at(i, i);
  if (p == i) return 0.5 * at(i, q);
  if (q == i) return 0.5 * at(p, i);
  return 0.0;
}

inline double stencil_apply(const Stencil& s, std::span<const double> u, int m, int comp) noexcept {
  double v = 0.0;
  for (int t = 0; t < s.count; ++t)
    v += s.coef[static_cast<std::size_t>(t)] * u[s.node[static_cast<std::size_t>(t)] * static_cast<std::size_t>(m) + static_cast<std::size_t>(comp)];
  return v;
}

inline void check_resolution(const TensorField& field, const Grid& grid, double eps, bool override_flag) {
  if (override_flag || field.is_constant()) return;
  const double limit = eps * field.oscillation_scale() / 8.0;
  if (grid.h_max() > limit)
    throw ValidationError("under-resolved oscillation: h_max=" + std::to_string(grid.h_max()) +
                          " exceeds eps*(2pi/max|w|)/8=" + std::to_string(limit));
}

}  // namespace detail

/// Lumped mass (dual volume) per dof.
inline Eigen::VectorXd lumped_mass(const Grid& grid, int m) {
  Eigen::VectorXd mass(static_cast<Eigen::Index>(grid.node_count() * static_cast<std::size_t>(m)));
  for (std::size_t k = 0; k < grid.node_count(); ++k)
    for (int a = 0; a < m; ++a) mass(static_cast<Eigen::Index>(k * static_cast<std::size_t>(m) + static_cast<std::size_t>(a))) = grid.weight(k);
  return mass;
}

/// Assembles L = -div(A(x/eps) grad .) + zero_order on the grid. The coefficient is
/// sampled as A(x/eps); h_max must not exceed eps*(2 pi/max|w|)/8 unless overridden.
inline DiscreteOperator assemble(const TensorField& field, const Grid& grid, double eps, double zero_order,
                                 BoundaryKind bc, const AssembleOptions& opts = {}) {
  if (!(eps > 0.0)) throw ValidationError("assemble: epsilonScale must be > 0");
  if (field.dim() != grid.dim()) throw ValidationError("assemble: field and grid dimensions differ");
  if (bc == BoundaryKind::periodic && !grid.all_periodic())
    throw ValidationError("assemble: periodic BC needs a fully periodic grid");
  if (bc != BoundaryKind::periodic && grid.any_periodic())
    throw ValidationError("assemble: dirichlet/neumann BC needs a non-periodic grid");
  detail::check_resolution(field, grid, eps, opts.override_resolution);

  const int d = grid.dim();
  const int m = field.systems();
  const bool cross = !field.has_no_cross_terms();
  const auto ndof = static_cast<Eigen::Index>(grid.node_count() * static_cast<std::size_t>(m));

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(ndof) * static_cast<std::size_t>(cross ? 9 * d : 2 * d + 1) * static_cast<std::size_t>(m));

  detail::for_each_face(field, grid, eps, [&](const detail::Face& f) {
    for (int p = 0; p < d; ++p) {
      for (int q = 0; q < d; ++q) {
        if (!cross && (p != f.axis || q != f.axis)) continue;
        const auto& sv = f.gradient[static_cast<std::size_t>(p)];
        const auto& su = f.gradient[static_cast<std::size_t>(q)];
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b) {
            const double c = detail::family_coef(f, d, m, p, q, a, b);
            if (c == 0.0) continue;
            const double wc = f.weight * c;
            for (int s = 0; s < sv.count; ++s)
              for (int t = 0; t < su.count; ++t)
                trip.emplace_back(static_cast<Eigen::Index>(sv.node[static_cast<std::size_t>(s)] * static_cast<std::size_t>(m) + static_cast<std::size_t>(a)),
                                  static_cast<Eigen::Index>(su.node[static_cast<std::size_t>(t)] * static_cast<std::size_t>(m) + static_cast<std::size_t>(b)),
                                  wc * sv.coef[static_cast<std::size_t>(s)] * su.coef[static_cast<std::size_t>(t)]);
          }
      }
    }
  });

  DiscreteOperator op;
  op.grid = grid;
  op.components = m;
  op.bc = bc;
  op.zero_order = zero_order;
  op.mass = lumped_mass(grid, m);
  if (zero_order != 0.0)
    for (Eigen::Index k = 0; k < ndof; ++k) trip.emplace_back(k, k, zero_order * op.mass(k));
  op.stiffness.resize(ndof, ndof);
  op.stiffness.setFromTriplets(trip.begin(), trip.end());
  op.stiffness.makeCompressed();
  op.fixed.assign(static_cast<std::size_t>(ndof), 0);
  if (bc == BoundaryKind::dirichlet)
    for (std::size_t k = 0; k < grid.node_count(); ++k)
      if (grid.on_boundary(k))
        for (int a = 0; a < m; ++a) op.fixed[k * static_cast<std::size_t>(m) + static_cast<std::size_t>(a)] = 1;
  op.symmetric = field.is_symmetric();
  op.singular = bc != BoundaryKind::dirichlet && zero_order == 0.0;
  return op;
}

/// Evaluates B(v, u) directly from the face loop (no matrix).
inline double bilinear_form(const TensorField& field, const Grid& grid, double eps, std::span<const double> v,
                            std::span<const double> u) {
  const int d = grid.dim();
  const int m = field.systems();
  double total = 0.0;
  detail::for_each_face(field, grid, eps, [&](const detail::Face& f) {
    double acc = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q)
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b) {
            const double c = detail::family_coef(f, d, m, p, q, a, b);
            if (c == 0.0) continue;
            acc += c * detail::stencil_apply(f.gradient[static_cast<std::size_t>(p)], v, m, a) *
                   detail::stencil_apply(f.gradient[static_cast<std::size_t>(q)], u, m, b);
          }
    total += f.weight * acc;
  });
  return total;
}

/// Right-hand side of the corrector equation in stiffness form: entry (node, alpha)
/// is -B(phi_node^alpha, P) for the affine P with constant gradient e_j^beta.
inline Eigen::VectorXd constant_gradient_rhs(const TensorField& field, const Grid& grid, double eps, int j,
                                             int beta) {
  const int d = grid.dim();
  const int m = field.systems();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.node_count() * static_cast<std::size_t>(m)));
  detail::for_each_face(field, grid, eps, [&](const detail::Face& f) {
    for (int p = 0; p < d; ++p)
      for (int a = 0; a < m; ++a) {
        const double c = detail::family_coef(f, d, m, p, j, a, beta);
        if (c == 0.0) continue;
        const auto& s = f.gradient[static_cast<std::size_t>(p)];
        for (int t = 0; t < s.count; ++t)
          b(static_cast<Eigen::Index>(s.node[static_cast<std::size_t>(t)] * static_cast<std::size_t>(m) + static_cast<std::size_t>(a))) -=
              f.weight * c * s.coef[static_cast<std::size_t>(t)];
      }
  });
  return b;
}

/// Box mean of the face flux sum_{q,b} c_{iq}^{ab} (g_q(u^b) + delta_{qj} delta_{b beta}),
/// i.e. (1/|box|) B(P_i^alpha, u + P_j^beta). With u a corrector column this is the
/// discrete <A(e_j^beta + grad chi)> in row (i, alpha).
inline double flux_mean(const TensorField& field, const Grid& grid, double eps, std::span<const double> u, int i,
                        int alpha, int j, int beta) {
  const int d = grid.dim();
  const int m = field.systems();
  double total = 0.0;
  detail::for_each_face(field, grid, eps, [&](const detail::Face& f) {
    double acc = 0.0;
    for (int q = 0; q < d; ++q)
      for (int b = 0; b < m; ++b) {
        const double c = detail::family_coef(f, d, m, i, q, alpha, b);
        if (c == 0.0) continue;
        double g = u.empty() ? 0.0 : detail::stencil_apply(f.gradient[static_cast<std::size_t>(q)], u, m, b);
        if (q == j && b == beta) g += 1.0;
        acc += c * g;
      }
    total += f.weight * acc;
  });
  return total / grid.volume();
}

}  // namespace homoglab
