#pragma once

// Homogenized tensor, discrepancy matrix B_T, the moduli Theta_sigma and omega,
// Dini integrals and the two-scale remainder.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "homoglab/corrector.hpp"
#include "homoglab/error.hpp"
#include "homoglab/field.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/operator.hpp"

namespace homoglab {

struct EffectiveTensor {
  CoefTensor entries;
  double T = 0.0;  ///< +infinity for the exact cell problem
  Grid grid;
  std::string method;  ///< "approximate-corrector" | "exact-periodic-cell"

  /// Constant-coefficient field with these entries.
  TensorField as_field(double mu) const { return TensorField(entries, {}, mu); }
};

namespace detail {

/// Box mean of A(e_j^beta + grad chi_j^beta) in row (i, alpha), computed from the same
/// face fluxes as the stiffness matrix so that the discrete identities hold exactly.
inline CoefTensor flux_means(const CorrectorSet& cs) {
  const int d = cs.dim();
  const int m = cs.systems();
  CoefTensor out(d, m);
  std::vector<double> g(static_cast<std::size_t>(d * m));
  detail::for_each_face(cs.field, cs.box, 1.0, [&](const detail::Face& f) {
    for (int j = 0; j < d; ++j)
      for (int beta = 0; beta < m; ++beta) {
        std::span<const double> u(cs.column(j, beta).values);
        for (int q = 0; q < d; ++q)
          for (int b = 0; b < m; ++b) {
            double v = detail::stencil_apply(f.gradient[static_cast<std::size_t>(q)], u, m, b);
            if (q == j && b == beta) v += 1.0;
            g[static_cast<std::size_t>(q * m + b)] = v;
          }
        for (int i = 0; i < d; ++i)
          for (int alpha = 0; alpha < m; ++alpha) {
            double acc = 0.0;
            for (int q = 0; q < d; ++q)
              for (int b = 0; b < m; ++b) {
                const double c = detail::family_coef(f, d, m, i, q, alpha, b);
                if (c != 0.0) acc += c * g[static_cast<std::size_t>(q * m + b)];
              }
            out(i, j, alpha, beta) += f.weight * acc;
          }
      }
  });
  for (double& v : out.values()) v /= cs.box.volume();
  return out;
}

}  // namespace detail

/// A-hat = <A> + <A grad chi_T> over the corrector box.
inline EffectiveTensor effective_tensor(const TensorField& field, const CorrectorSet& cs) {
  if (field.dim() != cs.dim() || field.systems() != cs.systems())
    throw ValidationError("effective_tensor: corrector set does not match field");
  EffectiveTensor e;
  e.entries = detail::flux_means(cs);
  e.T = cs.T;
  e.grid = cs.box;
  e.method = std::isinf(cs.T) ? "exact-periodic-cell" : "approximate-corrector";
  return e;
}

/// Solves the cell problem on one period (mean-zero) and returns A-hat. The
/// correctors are optionally handed back.
inline EffectiveTensor exact_periodic_cell(const TensorField& field, int n, CorrectorSet* correctors = nullptr,
                                           const CorrectorOptions& opts = {}) {
  CorrectorSet cs = solve_cell_corrector(field, n, opts);
  EffectiveTensor e = effective_tensor(field, cs);
  e.method = "exact-periodic-cell";
  if (correctors) *correctors = std::move(cs);
  return e;
}

struct BMatrix {
  GridFunction values;  ///< d*d*m*m components in CoefTensor layout
  CoefTensor mean;
};

/// Pointwise b_T = A-hat - A(y) - A(y) grad chi_T on the corrector grid nodes.
inline BMatrix b_matrix(const CorrectorSet& cs, const EffectiveTensor& eff) {
  const int d = cs.dim();
  const int m = cs.systems();
  if (eff.entries.dim() != d || eff.entries.systems() != m) throw ValidationError("b_matrix: shape mismatch");
  const Grid& g = cs.box;
  BMatrix out{GridFunction(g, d * d * m * m), CoefTensor(d, m)};
  CoefTensor a(d, m);
  std::vector<double> y(static_cast<std::size_t>(d));
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    g.coords(k, y);
    cs.field.evaluate_into(y, a.values());
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int al = 0; al < m; ++al)
          for (int be = 0; be < m; ++be) {
            double v = eff.entries(i, j, al, be) - a(i, j, al, be);
            const GridFunction& gc = cs.grad_column(j, be);
            for (int kk = 0; kk < d; ++kk)
              for (int ga = 0; ga < m; ++ga) v -= a(i, kk, al, ga) * gc.at(k, ga * d + kk);
            out.values.at(k, static_cast<int>(a.index(i, j, al, be))) = v;
          }
  }
  auto mv = mean(out.values);
  std::copy(mv.begin(), mv.end(), out.mean.values().begin());
  return out;
}

inline BMatrix b_matrix(const TensorField& field, const CorrectorSet& cs) {
  return b_matrix(cs, effective_tensor(field, cs));
}

// ---------------------------------------------------------------------------
// Theta_sigma(T) = inf_{0<R<=T} rho(R) + (R/T)^sigma

/// rho between table radii: log-log interpolation (linear when an endpoint is zero);
/// held constant outside the tabulated range.
inline double rho_interpolate(const RhoTable& t, double R) {
  const auto& r = t.radii;
  const auto& v = t.values;
  if (R <= r.front()) return v.front();
  if (R >= r.back()) return v.back();
  const auto it = std::upper_bound(r.begin(), r.end(), R);
  const std::size_t k = static_cast<std::size_t>(it - r.begin());
  const double r0 = r[k - 1], r1 = r[k], v0 = v[k - 1], v1 = v[k];
  if (v0 > 0.0 && v1 > 0.0) {
    const double s = std::log(R / r0) / std::log(r1 / r0);
    return std::exp(std::log(v0) + s * (std::log(v1) - std::log(v0)));
  }
  const double s = (R - r0) / (r1 - r0);
  return v0 + s * (v1 - v0);
}

struct ThetaResult {
  double value = 0.0;
  double argmin = 0.0;
  bool zero_modulus = false;  ///< rho vanishes on the whole table: the true infimum is 0
};

inline ThetaResult theta_detail(const RhoTable& table, double sigma, double T) {
  if (table.radii.empty() || table.radii.size() != table.values.size()) throw ValidationError("theta: empty rho table");
  if (!(sigma > 0.0 && sigma <= 1.0)) throw ValidationError("theta: sigma must lie in (0,1]");
  if (!(T >= 1.0)) throw ValidationError("theta: T must be >= 1");
  auto obj = [&](double R) { return rho_interpolate(table, R) + std::pow(R / T, sigma); };

  std::vector<double> cand;
  const double floor = T * 1e-6;
  const int steps = 6 * 64;
  for (int s = 0; s <= steps; ++s) cand.push_back(floor * std::pow(10.0, 6.0 * s / steps));
  for (double r : table.radii)
    if (r >= floor && r <= T) cand.push_back(r);
  std::sort(cand.begin(), cand.end());

  ThetaResult res;
  res.value = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t c = 0; c < cand.size(); ++c) {
    const double v = obj(cand[c]);
    if (v < res.value) {
      res.value = v;
      best = c;
    }
  }
  res.argmin = cand[best];
  // golden-section refinement in log R between the neighbouring candidates
  double a = std::log(cand[best > 0 ? best - 1 : 0]);
  double b = std::log(cand[std::min(best + 1, cand.size() - 1)]);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = obj(std::exp(x1)), f2 = obj(std::exp(x2));
  for (int it = 0; it < 80 && b - a > 1e-14; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = obj(std::exp(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = obj(std::exp(x2));
    }
  }
  for (auto [x, f] : {std::pair{x1, f1}, std::pair{x2, f2}})
    if (f < res.value) {
      res.value = f;
      res.argmin = std::exp(x);
    }
  res.zero_modulus = std::all_of(table.values.begin(), table.values.end(), [](double v) { return v == 0.0; });
  return res;
}

/// Theta_sigma(T) scanned down to R = T * 1e-6.
inline double theta(const RhoTable& table, double sigma, double T) { return theta_detail(table, sigma, T).value; }

struct ModulusTable {
  double sigma = 0.9;
  RhoTable rho;
  std::vector<double> theta_T;
  std::vector<double> theta_values;
  std::vector<double> omega_eps;
  std::vector<double> omega_values;
  std::vector<double> psi_T;       ///< increasing T
  std::vector<double> psi_values;  ///< <|grad chi_ref - grad chi_T|>
};

/// omega(eps) = [Theta_1(1/eps)]^sigma + sup_{T >= 1/eps} psi-distance, the sup taken as
/// the maximum over tabulated T >= 1/eps (at least three entries required). When rho
/// vanishes on the whole table the Theta term is its true infimum 0.
inline double omega(const ModulusTable& mt, double sigma, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("omega: epsilon must lie in (0,1]");
  const double T = 1.0 / eps;
  const auto th = theta_detail(mt.rho, 1.0, T);
  const double first = th.zero_modulus ? 0.0 : std::pow(th.value, sigma);
  if (mt.psi_T.size() != mt.psi_values.size()) throw ValidationError("omega: malformed psi table");
  double sup = 0.0;
  int covered = 0;
  for (std::size_t k = 0; k < mt.psi_T.size(); ++k)
    if (mt.psi_T[k] >= T * (1.0 - 1e-9)) {
      sup = std::max(sup, mt.psi_values[k]);
      ++covered;
    }
  if (covered < 3)
    throw ValidationError("omega: psi-distance table covers only " + std::to_string(covered) +
                          " values of T >= 1/eps; extend the corrector T sweep (need 3)");
  return first + sup;
}

/// Fills theta and omega columns of the table for the given T and eps grids.
inline void tabulate_moduli(ModulusTable& mt, const std::vector<double>& Ts, const std::vector<double>& eps) {
  mt.theta_T = Ts;
  mt.theta_values.clear();
  for (double T : Ts) mt.theta_values.push_back(theta(mt.rho, mt.sigma, T));
  mt.omega_eps = eps;
  mt.omega_values.clear();
  for (double e : eps) mt.omega_values.push_back(omega(mt, mt.sigma, e));
}

// ---------------------------------------------------------------------------
// Dini integrals

struct DiniResult {
  double value = 0.0;
  bool diverges = false;
  double tail_exponent = std::numeric_limits<double>::infinity();  ///< local p in g(s) ~ s^-p, s = log(1/t)
};

/// int_lower^1 [modulus(t)]^exponent dt/t by the trapezoid rule in log t.
/// diverges is set when the last decade contributes at least 0.9 of the previous one,
/// or when the integrand decays no faster than 1/log(1/t) at the lower end.
inline DiniResult dini_integral(const std::function<double(double)>& modulus, double exponent, double lower,
                                int points_per_decade = 400) {
  if (!(lower > 0.0)) throw ValidationError("dini_integral: lower must be > 0");
  if (!(lower < 1.0)) throw ValidationError("dini_integral: lower must be < 1");
  if (!(exponent > 0.0)) throw ValidationError("dini_integral: exponent must be > 0");
  auto g = [&](double s) {
    const double m = modulus(std::exp(-s));
    return m <= 0.0 ? 0.0 : std::pow(m, exponent);
  };
  const double S = std::log(1.0 / lower);
  const double decades = S / std::log(10.0);
  const int n = std::max(8, static_cast<int>(std::ceil(decades * points_per_decade)));
  const double ds = S / n;
  DiniResult r;
  std::vector<double> cum(static_cast<std::size_t>(n) + 1, 0.0);
  double prev = g(0.0);
  for (int k = 1; k <= n; ++k) {
    const double cur = g(k * ds);
    cum[static_cast<std::size_t>(k)] = cum[static_cast<std::size_t>(k - 1)] + 0.5 * ds * (prev + cur);
    prev = cur;
  }
  r.value = cum.back();
  auto cum_at = [&](double s) {
    const double x = std::clamp(s / ds, 0.0, static_cast<double>(n));
    const auto i = static_cast<std::size_t>(std::min(std::floor(x), static_cast<double>(n - 1)));
    return cum[i] + (x - static_cast<double>(i)) * (cum[i + 1] - cum[i]);
  };
  const double ln10 = std::log(10.0);
  if (S >= 2.0 * ln10) {
    const double last = cum_at(S) - cum_at(S - ln10);
    const double before = cum_at(S - ln10) - cum_at(S - 2.0 * ln10);
    if (before > 0.0 && last >= 0.9 * before) r.diverges = true;
  }
  const double g1 = g(S), g0 = g(0.5 * S);
  if (g1 > 0.0 && g0 > 0.0) {
    r.tail_exponent = std::log(g0 / g1) / std::log(2.0);
    if (r.tail_exponent <= 1.0) r.diverges = true;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Two-scale remainder

/// Multilinear interpolation of a box-periodic grid function at an arbitrary point.
inline void periodic_interpolate(const GridFunction& f, std::span<const double> y, std::span<double> out) {
  const Grid& g = f.grid;
  const int d = g.dim();
  std::array<int, 3> i0{};
  std::array<double, 3> t{};
  for (int a = 0; a < d; ++a) {
    const double n = g.points(a);
    double s = (y[static_cast<std::size_t>(a)] - g.origin()[static_cast<std::size_t>(a)]) / g.h(a);
    s = std::fmod(s, n);
    if (s < 0) s += n;
    const double fl = std::floor(s);
    i0[static_cast<std::size_t>(a)] = static_cast<int>(fl) % g.points(a);
    t[static_cast<std::size_t>(a)] = s - fl;
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (int corner = 0; corner < (1 << d); ++corner) {
    std::size_t node = 0;
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      const int bit = (corner >> a) & 1;
      const int idx = (i0[static_cast<std::size_t>(a)] + bit) % g.points(a);
      node += static_cast<std::size_t>(idx) * g.stride(a);
      w *= bit ? t[static_cast<std::size_t>(a)] : 1.0 - t[static_cast<std::size_t>(a)];
    }
    if (w == 0.0) continue;
    for (int c = 0; c < f.components; ++c) out[static_cast<std::size_t>(c)] += w * f.at(node, c);
  }
}

struct TwoScaleRemainder {
  GridFunction w;
  double l2 = 0.0;
  double h1 = 0.0;
};

/// Nodes at least `margin` cells away from every non-periodic boundary.
inline std::vector<std::size_t> interior_nodes(const Grid& g, int margin) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    bool ok = true;
    for (int a = 0; a < g.dim() && ok; ++a)
      if (!g.periodic()[static_cast<std::size_t>(a)]) {
        const int i = g.coord_index(k, a);
        ok = i >= margin && i <= g.cells()[static_cast<std::size_t>(a)] - margin;
      }
    if (ok) out.push_back(k);
  }
  return out;
}

/// w = u_eps - v0 - eps chi_T(x/eps) grad v0 with norms over the interior (2-cell margin).
inline TwoScaleRemainder two_scale_remainder(const GridFunction& u_eps, const GridFunction& v0, const CorrectorSet& cs,
                                             double eps) {
  if (!u_eps.grid.same_layout(v0.grid) || u_eps.components != v0.components)
    throw ValidationError("two_scale_remainder: u_eps and v0 live on different grids");
  if (!(eps > 0.0)) throw ValidationError("two_scale_remainder: epsilon must be > 0");
  if (!std::isinf(cs.T) && std::abs(cs.T - 1.0 / eps) > 1.0)
    throw ValidationError("two_scale_remainder: corrector T must equal 1/epsilon");
  const Grid& g = u_eps.grid;
  const int d = g.dim();
  const int m = u_eps.components;
  if (cs.dim() != d || cs.systems() != m) throw ValidationError("two_scale_remainder: corrector shape mismatch");
  const GridFunction gv = gradient(v0);
  TwoScaleRemainder r;
  r.w = u_eps - v0;
  std::vector<double> x(static_cast<std::size_t>(d)), chi(static_cast<std::size_t>(m));
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    g.coords(k, x);
    for (double& v : x) v /= eps;
    for (int j = 0; j < d; ++j)
      for (int be = 0; be < m; ++be) {
        periodic_interpolate(cs.column(j, be), x, chi);
        const double dv = gv.at(k, be * d + j);
        for (int al = 0; al < m; ++al) r.w.at(k, al) -= eps * chi[static_cast<std::size_t>(al)] * dv;
      }
  }
  const GridFunction gw = gradient(r.w);
  double l2 = 0.0, h1 = 0.0;
  for (std::size_t k : interior_nodes(g, 2)) {
    const double wt = g.weight(k);
    for (double v : r.w.node_values(k)) l2 += wt * v * v;
    for (double v : gw.node_values(k)) h1 += wt * v * v;
  }
  r.l2 = std::sqrt(l2);
  r.h1 = std::sqrt(l2 + h1);
  return r;
}

}  // namespace homoglab
