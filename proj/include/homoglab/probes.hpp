#pragma once

// Empirical harnesses: convergence-rate sweeps and the interior / boundary Lipschitz
// and W^{1,p} ratio probes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "homoglab/bvp.hpp"
#include "homoglab/error.hpp"
#include "homoglab/homogenize.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/parallel.hpp"

namespace homoglab {

// ---------------------------------------------------------------------------
// Rate sweep

struct RateRow {
  double epsilon = 0.0;
  double h = 0.0;
  double l2_error = 0.0;
  double omega = 0.0;
  double theory_ratio = 0.0;  ///< NaN when the modulus vanishes
};

struct RateReport {
  BoundaryKind mode = BoundaryKind::dirichlet;
  std::vector<RateRow> rows;
  double slope = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
  double ratio_spread = std::numeric_limits<double>::quiet_NaN();  ///< max/min theory_ratio
  bool monotone_errors = false;  ///< errors strictly decrease with epsilon
  std::vector<std::string> warnings;
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double spread(const std::vector<double>& v) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double x : v) {
    if (!std::isfinite(x) || x <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : hi / lo;
}

/// The Neumann-rate modulus Theta_sigma(1/eps) + sup_{T >= 1/eps} psi-distance.
inline double neumann_modulus(const ModulusTable& mt, double sigma, double eps) {
  const double T = 1.0 / eps;
  const auto th = theta_detail(mt.rho, sigma, T);
  const double first = th.zero_modulus ? 0.0 : th.value;
  // omega() validates table coverage; reuse its psi part
  const double om = omega(mt, sigma, eps);
  const auto th1 = theta_detail(mt.rho, 1.0, T);
  const double psi = om - (th1.zero_modulus ? 0.0 : std::pow(th1.value, sigma));
  return first + std::max(0.0, psi);
}

/// Solves u_eps for every eps and u_0 once (epsilon = 0 with `effective`), and
/// tabulates the L2 error against omega(eps). Neumann errors are mean-matched.
inline RateReport rate_sweep(const BVPSpec& base, const std::vector<double>& eps_list, const ModulusTable& moduli,
                             const CoefTensor& effective, double sigma) {
  if (eps_list.size() < 4) throw ValidationError("rate_sweep: need at least 4 epsilon values");
  RateReport rep;
  rep.mode = base.bc;
  const Grid g = base.grid();
  std::vector<double> used;
  for (double e : eps_list) {
    if (!(e > 0.0 && e <= 1.0)) throw ValidationError("rate_sweep: epsilon must lie in (0,1]");
    const double limit = e * base.field.oscillation_scale() / 8.0;
    if (!base.override_resolution && !base.field.is_constant() && g.h_max() > limit) {
      rep.warnings.push_back("epsilon " + std::to_string(e) + " skipped: under-resolved (h=" + std::to_string(g.h_max()) + ")");
      continue;
    }
    used.push_back(e);
  }
  BVPSpec s0 = base;
  s0.epsilon = 0.0;
  s0.effective = effective;
  std::vector<GridFunction> sols(used.size() + 1);
  parallel_for(used.size() + 1, [&](std::size_t i) {
    if (i == used.size()) {
      sols[i] = solve_bvp(s0);
    } else {
      BVPSpec s = base;
      s.epsilon = used[i];
      sols[i] = solve_bvp(s);
    }
  });
  const GridFunction& u0 = sols.back();
  double u0norm = lp_norm(u0, 2.0);
  std::vector<double> errs, ratios;
  for (std::size_t i = 0; i < used.size(); ++i) {
    GridFunction diff = sols[i] - u0;
    if (base.bc == BoundaryKind::neumann) {
      const auto mv = mean(diff);
      for (std::size_t k = 0; k < g.node_count(); ++k)
        for (int c = 0; c < diff.components; ++c) diff.at(k, c) -= mv[static_cast<std::size_t>(c)];
    }
    RateRow row;
    row.epsilon = used[i];
    row.h = g.h_max();
    row.l2_error = lp_norm(diff, 2.0);
    row.omega = omega(moduli, sigma, used[i]);
    const double denom = base.bc == BoundaryKind::dirichlet ? std::pow(row.omega, 2.0 / 3.0)
                                                            : std::sqrt(neumann_modulus(moduli, sigma, used[i]));
    row.theory_ratio = denom > 0.0 ? row.l2_error / denom : std::numeric_limits<double>::quiet_NaN();
    rep.rows.push_back(row);
    errs.push_back(row.l2_error);
    ratios.push_back(row.theory_ratio);
  }
  const double emax = errs.empty() ? 0.0 : *std::max_element(errs.begin(), errs.end());
  rep.degenerate = emax <= 2.0 * base.tol * std::max(1.0, u0norm);
  if (!rep.degenerate && rep.rows.size() >= 4) rep.slope = loglog_slope(used, errs);
  if (!rep.degenerate) rep.ratio_spread = spread(ratios);
  // rows are in the given epsilon order; monotone means error decreases as eps decreases
  std::vector<std::size_t> order(used.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return used[a] > used[b]; });
  rep.monotone_errors = !rep.degenerate;
  for (std::size_t i = 1; i < order.size(); ++i)
    if (!(errs[order[i]] < errs[order[i - 1]])) rep.monotone_errors = false;
  return rep;
}

// ---------------------------------------------------------------------------
// Probes

struct ProbeRow {
  double epsilon = 0.0;
  double ratio = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
};

struct ProbeTable {
  std::vector<ProbeRow> rows;
  double max_ratio = std::numeric_limits<double>::quiet_NaN();  ///< max/min of the ratio column
};

inline void finish(ProbeTable& t) {
  std::vector<double> r;
  for (const auto& row : t.rows) r.push_back(row.ratio);
  t.max_ratio = spread(r);
}

inline double grad_sup(const GridFunction& grad, const std::vector<std::size_t>& nodes) { return lp_avg(grad, nodes, INFINITY); }

/// r^beta sup_{y in 2B, 0<t<=r dyadic} t^{1-beta} avg_{B(y,t) cap 2B} |F|, with y on a
/// coarse node lattice and t >= 4h.
inline double interior_source_term(const Grid& g, const PointFn& source, int m, std::span<const double> center, double r,
                                   double beta = 0.5) {
  if (!source) return 0.0;
  const int d = g.dim();
  auto twob = ball_nodes(g, center, 2.0 * r);
  GridFunction F(g, m);
  std::vector<double> x(static_cast<std::size_t>(d));
  for (std::size_t k : twob) {
    g.coords(k, x);
    source(x, std::span<double>(F.values).subspan(k * static_cast<std::size_t>(m), static_cast<std::size_t>(m)));
  }
  const std::size_t stride = std::max<std::size_t>(1, twob.size() / 256);
  double best = 0.0;
  for (std::size_t s = 0; s < twob.size(); s += stride) {
    g.coords(twob[s], x);
    for (double t = r; t >= 4.0 * g.h_max(); t /= 2.0) {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t k : twob) {
        double dist2 = 0.0;
        for (int i = 0; i < d; ++i) {
          const double dx = g.coord(k, i) - x[static_cast<std::size_t>(i)];
          dist2 += dx * dx;
        }
        if (dist2 <= t * t) {
          sum += node_magnitude(F.node_values(k));
          ++cnt;
        }
      }
      if (cnt) best = std::max(best, std::pow(t, 1.0 - beta) * sum / static_cast<double>(cnt));
    }
  }
  return std::pow(r, beta) * best;
}

inline void check_interior_ball(const Grid& g, std::span<const double> center, double r) {
  for (int i = 0; i < g.dim(); ++i) {
    const double lo = g.origin()[static_cast<std::size_t>(i)];
    const double hi = lo + g.side()[static_cast<std::size_t>(i)];
    const double c = center[static_cast<std::size_t>(i)];
    if (c - 2.0 * r < lo + 4.0 * g.h(i) || c + 2.0 * r > hi - 4.0 * g.h(i))
      throw ValidationError("probe ball 2B is too close to the boundary (margin 4h required)");
  }
}

/// ||grad u||_{L^inf(B)} / [ (1/r) (avg_{2B} |u|^2)^{1/2} + sourceTerm ].
inline ProbeRow lipschitz_ratio(const GridFunction& u, const PointFn& source, std::span<const double> center, double r,
                                double beta = 0.5) {
  check_interior_ball(u.grid, center, r);
  const auto gu = gradient(u);
  ProbeRow row;
  row.numerator = grad_sup(gu, ball_nodes(u.grid, center, r));
  row.denominator = lp_avg(u, ball_nodes(u.grid, center, 2.0 * r), 2.0) / r +
                    interior_source_term(u.grid, source, u.components, center, r, beta);
  row.ratio = row.numerator / row.denominator;
  return row;
}

/// (avg_B |grad u|^p)^{1/p} / (avg_{2B} |grad u|^2)^{1/2}.
inline ProbeRow w1p_ratio(const GridFunction& u, double p, std::span<const double> center, double r) {
  if (!(p >= 1.0)) throw ValidationError("w1p: p must be >= 1");
  check_interior_ball(u.grid, center, r);
  const auto gu = gradient(u);
  ProbeRow row;
  row.numerator = lp_avg(gu, ball_nodes(u.grid, center, r), p);
  row.denominator = lp_avg(gu, ball_nodes(u.grid, center, 2.0 * r), 2.0);
  row.ratio = row.numerator / row.denominator;
  return row;
}

namespace detail {

/// Boundary nodes on the flat edge {x_axis = origin_axis} within distance rad of center.
inline std::vector<std::size_t> edge_nodes(const Grid& g, int axis, std::span<const double> center, double rad) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    if (g.coord_index(k, axis) != 0) continue;
    double dist2 = 0.0;
    for (int i = 0; i < g.dim(); ++i) {
      const double dx = g.coord(k, i) - center[static_cast<std::size_t>(i)];
      dist2 += dx * dx;
    }
    if (dist2 <= rad * rad * (1.0 + 1e-12)) out.push_back(k);
  }
  return out;
}

/// sup and beta-Hoelder seminorm of the vector-valued node data vals[k] over the nodes.
inline std::pair<double, double> sup_and_holder(const Grid& g, const std::vector<std::size_t>& nodes,
                                                const std::vector<std::vector<double>>& vals, double beta) {
  double sup = 0.0, hol = 0.0;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    sup = std::max(sup, node_magnitude(vals[a]));
    for (std::size_t b = a + 1; b < nodes.size(); ++b) {
      double dist2 = 0.0, diff2 = 0.0;
      for (int i = 0; i < g.dim(); ++i) {
        const double dx = g.coord(nodes[a], i) - g.coord(nodes[b], i);
        dist2 += dx * dx;
      }
      for (std::size_t c = 0; c < vals[a].size(); ++c) diff2 += (vals[a][c] - vals[b][c]) * (vals[a][c] - vals[b][c]);
      hol = std::max(hol, std::sqrt(diff2) / std::pow(std::sqrt(dist2), beta));
    }
  }
  return {sup, hol};
}

inline void check_half_ball(const Grid& g, int axis, std::span<const double> center, double r) {
  if (std::abs(center[static_cast<std::size_t>(axis)] - g.origin()[static_cast<std::size_t>(axis)]) > 1e-12)
    throw ValidationError("boundary probe: center must lie on the flat edge");
  for (int i = 0; i < g.dim(); ++i) {
    const double lo = g.origin()[static_cast<std::size_t>(i)];
    const double hi = lo + g.side()[static_cast<std::size_t>(i)];
    const double c = center[static_cast<std::size_t>(i)];
    const bool ok = i == axis ? c + 2.0 * r <= hi + 1e-12 : (c - 2.0 * r >= lo - 1e-12 && c + 2.0 * r <= hi + 1e-12);
    if (!ok) throw ValidationError("boundary probe region D_2r leaves the domain");
  }
}

}  // namespace detail

/// Boundary Lipschitz ratio on the half-ball D_r at the flat edge x_axis = origin.
/// Dirichlet denominator: (1/r)(avg_{D_2r}|u|^2)^{1/2} + r||f|| + ||grad_tan f|| + r^beta [grad_tan f]_beta.
/// Neumann denominator: (avg_{D_2r}|grad u|^2)^{1/2} + ||g|| + r^beta [g]_beta.
/// Norms of the data are taken over boundary nodes of Delta_2r, tangential derivatives by
/// centered differences along the edge.
inline ProbeRow boundary_lipschitz_ratio(const GridFunction& u, BoundaryKind bc, const PointFn& f, const BoundaryFn& gfn,
                                         std::span<const double> center, double r, int axis = 1, double beta = 0.5) {
  const Grid& g = u.grid;
  const int d = g.dim();
  const int m = u.components;
  detail::check_half_ball(g, axis, center, r);
  const auto gu = gradient(u);
  ProbeRow row;
  row.numerator = grad_sup(gu, ball_nodes(g, center, r, true));
  const auto d2r = ball_nodes(g, center, 2.0 * r, true);
  const auto edge = detail::edge_nodes(g, axis, center, 2.0 * r);
  if (edge.size() < 3) throw ValidationError("boundary probe: too few edge nodes");
  std::vector<double> x(static_cast<std::size_t>(d)), normal(static_cast<std::size_t>(d), 0.0), out(static_cast<std::size_t>(m));
  normal[static_cast<std::size_t>(axis)] = -1.0;
  if (bc == BoundaryKind::dirichlet) {
    if (!f) throw ValidationError("boundary probe: Dirichlet data missing");
    double fsup = 0.0;
    std::vector<std::vector<double>> tan(edge.size());
    for (std::size_t e = 0; e < edge.size(); ++e) {
      g.coords(edge[e], x);
      f(x, out);
      fsup = std::max(fsup, node_magnitude(out));
      for (int i = 0; i < d; ++i) {
        if (i == axis) continue;
        const double hh = g.h(i);
        std::vector<double> xp(x), xm(x), op(static_cast<std::size_t>(m)), om(static_cast<std::size_t>(m));
        xp[static_cast<std::size_t>(i)] += hh;
        xm[static_cast<std::size_t>(i)] -= hh;
        f(xp, op);
        f(xm, om);
        for (int c = 0; c < m; ++c) tan[e].push_back((op[static_cast<std::size_t>(c)] - om[static_cast<std::size_t>(c)]) / (2.0 * hh));
      }
    }
    const auto [tsup, thol] = detail::sup_and_holder(g, edge, tan, beta);
    row.denominator = lp_avg(u, d2r, 2.0) / r + r * fsup + tsup + std::pow(r, beta) * thol;
  } else {
    if (!gfn) throw ValidationError("boundary probe: Neumann data missing");
    std::vector<std::vector<double>> gv(edge.size());
    for (std::size_t e = 0; e < edge.size(); ++e) {
      g.coords(edge[e], x);
      gfn(x, normal, out);
      gv[e] = out;
    }
    const auto [gsup, ghol] = detail::sup_and_holder(g, edge, gv, beta);
    row.denominator = lp_avg(gu, d2r, 2.0) + gsup + std::pow(r, beta) * ghol;
  }
  row.ratio = row.numerator / row.denominator;
  return row;
}

/// Solves u_eps for every eps (concurrently) and returns the solutions in order.
inline std::vector<GridFunction> solve_sweep(const BVPSpec& base, const std::vector<double>& eps_list) {
  std::vector<GridFunction> out(eps_list.size());
  parallel_for(eps_list.size(), [&](std::size_t i) {
    BVPSpec s = base;
    s.epsilon = eps_list[i];
    out[i] = solve_bvp(s);
  });
  return out;
}

inline ProbeTable lipschitz_probe(const BVPSpec& base, const std::vector<double>& eps_list, std::span<const double> center,
                                  double r) {
  check_interior_ball(base.grid(), center, r);
  ProbeTable t;
  const auto sols = solve_sweep(base, eps_list);
  for (std::size_t i = 0; i < sols.size(); ++i) {
    auto row = lipschitz_ratio(sols[i], base.source, center, r);
    row.epsilon = eps_list[i];
    t.rows.push_back(row);
  }
  finish(t);
  return t;
}

inline ProbeTable w1p_probe(const BVPSpec& base, const std::vector<double>& eps_list, double p,
                            std::span<const double> center, double r) {
  check_interior_ball(base.grid(), center, r);
  ProbeTable t;
  const auto sols = solve_sweep(base, eps_list);
  for (std::size_t i = 0; i < sols.size(); ++i) {
    auto row = w1p_ratio(sols[i], p, center, r);
    row.epsilon = eps_list[i];
    t.rows.push_back(row);
  }
  finish(t);
  return t;
}

inline ProbeTable boundary_lipschitz_probe(const BVPSpec& base, const std::vector<double>& eps_list,
                                           std::span<const double> center, double r, int axis = 1) {
  detail::check_half_ball(base.grid(), axis, center, r);
  ProbeTable t;
  const auto sols = solve_sweep(base, eps_list);
  for (std::size_t i = 0; i < sols.size(); ++i) {
    auto row = boundary_lipschitz_ratio(sols[i], base.bc, base.dirichlet, base.neumann, center, r, axis);
    row.epsilon = eps_list[i];
    t.rows.push_back(row);
  }
  finish(t);
  return t;
}

}  // namespace homoglab
