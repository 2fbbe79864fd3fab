#pragma once

// Means, integral norms, ball averages and difference gradients on grid functions.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "homoglab/error.hpp"
#include "homoglab/grid.hpp"

namespace homoglab {

/// Quadrature integral per component (trapezoid weights).
inline std::vector<double> integral(const GridFunction& f) {
  std::vector<double> s(static_cast<std::size_t>(f.components), 0.0);
  for (std::size_t k = 0; k < f.grid.node_count(); ++k) {
    const double w = f.grid.weight(k);
    for (int c = 0; c < f.components; ++c) s[static_cast<std::size_t>(c)] += w * f.at(k, c);
  }
  return s;
}

/// Box mean per component.
inline std::vector<double> mean(const GridFunction& f) {
  auto s = integral(f);
  for (double& v : s) v /= f.grid.volume();
  return s;
}

inline double node_magnitude(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// ||f||_{L^p}; pointwise magnitude is the Euclidean norm over components.
/// p = infinity gives the node maximum.
inline double lp_norm(const GridFunction& f, double p) {
  if (!(p >= 1.0)) throw ValidationError("lp_norm: p must be >= 1");
  if (std::isinf(p)) {
    double m = 0.0;
    for (std::size_t k = 0; k < f.grid.node_count(); ++k) m = std::max(m, node_magnitude(f.node_values(k)));
    return m;
  }
  double s = 0.0;
  for (std::size_t k = 0; k < f.grid.node_count(); ++k) s += f.grid.weight(k) * std::pow(node_magnitude(f.node_values(k)), p);
  return std::pow(s, 1.0 / p);
}

/// Nodes whose centers lie in the closed ball B(center, r). Unless `clip` is set, the
/// ball must lie inside the grid box. With `clip`, the ball is intersected with the box
/// (half-balls at a flat boundary).
inline std::vector<std::size_t> ball_nodes(const Grid& grid, std::span<const double> center, double r, bool clip = false) {
  const int d = grid.dim();
  if (static_cast<int>(center.size()) != d) throw ValidationError("ball: center dimension mismatch");
  if (!(r > 0.0)) throw ValidationError("ball: radius must be > 0");
  for (int i = 0; i < d; ++i) {
    const double lo = grid.origin()[static_cast<std::size_t>(i)];
    const double hi = lo + grid.side()[static_cast<std::size_t>(i)];
    const double slack = 1e-12 * grid.side()[static_cast<std::size_t>(i)];
    const double c = center[static_cast<std::size_t>(i)];
    if (clip ? (c < lo - slack || c > hi + slack) : (c - r < lo - slack || c + r > hi + slack))
      throw ValidationError("ball outside grid box");
  }
  std::vector<std::size_t> nodes;
  std::vector<double> x(static_cast<std::size_t>(d));
  const double r2 = r * r * (1.0 + 1e-12);
  for (std::size_t k = 0; k < grid.node_count(); ++k) {
    grid.coords(k, x);
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const double dx = x[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)];
      s += dx * dx;
    }
    if (s <= r2) nodes.push_back(k);
  }
  if (nodes.empty()) throw ValidationError("ball contains no grid nodes");
  return nodes;
}

/// (node-average of |f|^p over the node set)^{1/p}; p = infinity gives the max.
inline double lp_avg(const GridFunction& f, const std::vector<std::size_t>& nodes, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (auto k : nodes) m = std::max(m, node_magnitude(f.node_values(k)));
    return m;
  }
  double s = 0.0;
  for (auto k : nodes) s += std::pow(node_magnitude(f.node_values(k)), p);
  return std::pow(s / static_cast<double>(nodes.size()), 1.0 / p);
}

inline double l2_avg_ball(const GridFunction& f, std::span<const double> center, double r, bool clip = false) {
  return lp_avg(f, ball_nodes(f.grid, center, r, clip), 2.0);
}

/// Difference gradient: component alpha*d + j holds d_j f^alpha. Centered in the
/// interior and across periodic seams, one-sided on non-periodic boundaries.
inline GridFunction gradient(const GridFunction& f) {
  const Grid& g = f.grid;
  const int d = g.dim();
  const int m = f.components;
  GridFunction out(g, m * d);
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    for (int j = 0; j < d; ++j) {
      const long up = g.neighbor(k, j, +1);
      const long dn = g.neighbor(k, j, -1);
      const double h = g.h(j);
      for (int a = 0; a < m; ++a) {
        double v;
        if (up >= 0 && dn >= 0)
          v = (f.at(static_cast<std::size_t>(up), a) - f.at(static_cast<std::size_t>(dn), a)) / (2.0 * h);
        else if (up >= 0)
          v = (f.at(static_cast<std::size_t>(up), a) - f.at(k, a)) / h;
        else
          v = (f.at(k, a) - f.at(static_cast<std::size_t>(dn), a)) / h;
        out.at(k, a * d + j) = v;
      }
    }
  }
  return out;
}

inline GridFunction operator-(const GridFunction& a, const GridFunction& b) {
  if (!a.grid.same_layout(b.grid) || a.components != b.components) throw ValidationError("grid function mismatch");
  GridFunction out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
  return out;
}

}  // namespace homoglab
