#pragma once

// Affine excess, the two-sequence iteration lemma with an explicit constant, and the
// flatness profiler.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "homoglab/error.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/homogenize.hpp"
#include "homoglab/krylov.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/operator.hpp"

namespace homoglab {

// ---------------------------------------------------------------------------
// Affine excess

struct AffineExcess {
  double F = 0.0;
  Eigen::MatrixXd M;  ///< m x d
  Eigen::VectorXd q;  ///< m
};

/// Least-squares fit of u by Mx + q over a node set; F = (1/r) sqrt(node-mean |u - Mx - q|^2).
inline AffineExcess affine_excess_nodes(const GridFunction& u, const std::vector<std::size_t>& nodes,
                                        std::span<const double> center, double r) {
  const Grid& g = u.grid;
  const int d = g.dim();
  const int m = u.components;
  if (nodes.size() < static_cast<std::size_t>(d + 2)) throw ValidationError("affine_excess: fewer than d+2 nodes in the ball");
  const auto n = static_cast<Eigen::Index>(nodes.size());
  // Centered, r-scaled coordinates keep the least-squares problem well conditioned.
  Eigen::MatrixXd X(n, d + 1);
  Eigen::MatrixXd Y(n, m);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t node = nodes[static_cast<std::size_t>(k)];
    X(k, 0) = 1.0;
    for (int i = 0; i < d; ++i) X(k, i + 1) = (g.coord(node, i) - center[static_cast<std::size_t>(i)]) / r;
    for (int c = 0; c < m; ++c) Y(k, c) = u.at(node, c);
  }
  const auto qr = X.colPivHouseholderQr();
  if (qr.rank() < d + 1) throw ValidationError("affine_excess: degenerate node set");
  const Eigen::MatrixXd coef = qr.solve(Y);  // (d+1) x m
  const Eigen::MatrixXd res = Y - X * coef;
  AffineExcess out;
  out.F = std::sqrt(res.squaredNorm() / static_cast<double>(n)) / r;
  out.M.resize(m, d);
  out.q.resize(m);
  for (int c = 0; c < m; ++c) {
    double q = coef(0, c);
    for (int i = 0; i < d; ++i) {
      out.M(c, i) = coef(i + 1, c) / r;
      q -= out.M(c, i) * center[static_cast<std::size_t>(i)];
    }
    out.q(c) = q;
  }
  return out;
}

/// inf over affine Mx+q of the ball excess; the ball must lie inside u's grid.
inline AffineExcess affine_excess(const GridFunction& u, std::span<const double> center, double r) {
  return affine_excess_nodes(u, ball_nodes(u.grid, center, r), center, r);
}

/// (1/t) inf_q (node-mean over B_t |u - q|^2)^{1/2}; the infimum is attained at the mean.
inline double constant_excess(const GridFunction& u, std::span<const double> center, double t) {
  const auto nodes = ball_nodes(u.grid, center, t);
  std::vector<double> mu(static_cast<std::size_t>(u.components), 0.0);
  for (auto k : nodes)
    for (int c = 0; c < u.components; ++c) mu[static_cast<std::size_t>(c)] += u.at(k, c);
  for (double& v : mu) v /= static_cast<double>(nodes.size());
  double s = 0.0;
  for (auto k : nodes)
    for (int c = 0; c < u.components; ++c) s += std::pow(u.at(k, c) - mu[static_cast<std::size_t>(c)], 2);
  return std::sqrt(s / static_cast<double>(nodes.size())) / t;
}

// ---------------------------------------------------------------------------
// Two-sequence iteration lemma

struct LemmaInstance {
  std::vector<double> F;    ///< F_0 .. F_l
  std::vector<double> p;    ///< p_0 .. p_l
  std::vector<double> eta;  ///< eta_1 .. eta_l
  double K = 0.0;
  double C0 = 0.0;
  double C1 = 0.0;

  std::size_t length() const noexcept { return eta.size(); }  ///< l
  double eta_at(std::size_t j) const { return eta[j - 1]; }   ///< 1-based

  bool operator==(const LemmaInstance&) const = default;

  /// Shape and sign invariants; throws ValidationError.
  void validate() const {
    const std::size_t l = eta.size();
    if (l < 2) throw ValidationError("LemmaInstance: need l >= 2");
    if (F.size() != l + 1 || p.size() != l + 1) throw ValidationError("LemmaInstance: F and p need l+1 entries");
    auto nonneg = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x) && x >= 0.0; });
    };
    if (!nonneg(F) || !nonneg(p) || !nonneg(eta) || !(K >= 0.0) || !(C0 >= 0.0) || !(C1 >= 0.0))
      throw ValidationError("LemmaInstance: entries must be finite and nonnegative");
    for (std::size_t j = 1; j < l; ++j)
      if (eta[j] < eta[j - 1]) throw ValidationError("LemmaInstance: eta must be nondecreasing");
    if (eta[l - 1] != eta[l - 2]) throw ValidationError("LemmaInstance: the last two eta must be equal");
    double s = 0.0;
    for (double e : eta) s += e;
    if (s > C1 + 1e-12) throw ValidationError("LemmaInstance: sum of eta exceeds C1");
  }
};

inline void to_json(nlohmann::json& j, const LemmaInstance& x) {
  j = nlohmann::json{{"F", x.F}, {"p", x.p}, {"eta", x.eta}, {"K", x.K}, {"C0", x.C0}, {"C1", x.C1}};
}

inline void from_json(const nlohmann::json& j, LemmaInstance& x) {
  j.at("F").get_to(x.F);
  j.at("p").get_to(x.p);
  j.at("eta").get_to(x.eta);
  j.at("K").get_to(x.K);
  j.at("C0").get_to(x.C0);
  j.at("C1").get_to(x.C1);
}

/// Constant C(C0, C1) obtained by composing the explicit bounds of the proof:
///   C2 = 2 e^{2 C1}          (F_j <= C2 [(2^-j + eta_j)(F0+F1) + eta_j max p_{<j}])
///   a  = C0 C2
///   Cp = e^{a C1} max(1, a (2 + C1))   (p_j <= Cp (p0 + F0 + F1), K absorbed into p)
///   C  = C2 (1 + Cp)
inline double lemma_constant(double C0, double C1) {
  if (!(C0 >= 0.0) || !(C1 >= 0.0)) throw ValidationError("lemma_constant: C0, C1 must be >= 0");
  const double c2 = 2.0 * std::exp(2.0 * C1);
  const double a = C0 * c2;
  const double cp = std::exp(a * C1) * std::max(1.0, a * (2.0 + C1));
  return c2 * (1.0 + cp);
}

struct LemmaReport {
  bool hypotheses_ok = true;
  long first_violation = -1;  ///< index j of the first violated hypothesis
  std::string violated;       ///< "p-step" or "F-step"
  bool conclusions_ok = true;
  long first_conclusion_violation = -1;
  double witness_c = 0.0;
};

inline LemmaReport lemma_check(const LemmaInstance& in) {
  in.validate();
  const std::size_t l = in.length();
  const auto& F = in.F;
  const auto& p = in.p;
  constexpr double rel = 1e-12;
  auto le = [](double lhs, double rhs) { return lhs <= rhs * (1.0 + rel) + 1e-300; };
  LemmaReport rep;
  rep.witness_c = lemma_constant(in.C0, in.C1);

  double pmax = p[0], fmax = F[0];  // maxima over indices < j
  for (std::size_t j = 0; j < l && rep.hypotheses_ok; ++j) {
    if (!le(p[j + 1], p[j] + in.C0 * std::max(F[j], F[j + 1]))) {
      rep.hypotheses_ok = false;
      rep.first_violation = static_cast<long>(j);
      rep.violated = "p-step";
      break;
    }
    if (j >= 1) {
      const double eta = in.eta_at(j);
      if (!le(F[j + 1], 0.5 * F[j] + eta * (in.K + pmax + fmax))) {
        rep.hypotheses_ok = false;
        rep.first_violation = static_cast<long>(j);
        rep.violated = "F-step";
        break;
      }
      pmax = std::max(pmax, p[j]);
      fmax = std::max(fmax, F[j]);
    }
  }

  const double base = in.K + p[0] + F[0] + F[1];
  for (std::size_t j = 1; j <= l; ++j) {
    const bool ok = le(p[j], rep.witness_c * base) &&
                    le(F[j], rep.witness_c * (std::pow(2.0, -static_cast<double>(j)) + in.eta_at(j)) * base);
    if (!ok) {
      rep.conclusions_ok = false;
      rep.first_conclusion_violation = static_cast<long>(j);
      break;
    }
  }
  return rep;
}

/// Random extremal instance: eta nondecreasing with sum C1 and equal last pair, F and
/// p generated with equality in both hypotheses. `slack` in [0,1] scales the
/// increments (1 = equality case).
template <class Rng>
LemmaInstance generate_lemma_instance(Rng& rng, double C0, double C1, std::size_t l, bool random_slack = false) {
  if (l < 5) throw ValidationError("generate_lemma_instance: need l >= 5");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  LemmaInstance in;
  in.C0 = C0;
  in.C1 = C1;
  in.eta.resize(l);
  for (double& e : in.eta) e = u01(rng);
  std::sort(in.eta.begin(), in.eta.end());
  in.eta[l - 1] = in.eta[l - 2];
  double s = 0.0;
  for (double e : in.eta) s += e;
  for (double& e : in.eta) e = s > 0.0 ? e * C1 / s : 0.0;
  in.K = u01(rng);
  in.F.assign(l + 1, 0.0);
  in.p.assign(l + 1, 0.0);
  in.F[0] = u01(rng);
  in.F[1] = u01(rng);
  in.p[0] = u01(rng);
  auto factor = [&] { return random_slack ? u01(rng) : 1.0; };
  in.p[1] = in.p[0] + factor() * C0 * std::max(in.F[0], in.F[1]);
  double pmax = in.p[0], fmax = in.F[0];
  for (std::size_t j = 1; j < l; ++j) {
    in.F[j + 1] = factor() * (0.5 * in.F[j] + in.eta_at(j) * (in.K + pmax + fmax));
    in.p[j + 1] = in.p[j] + factor() * C0 * std::max(in.F[j], in.F[j + 1]);
    pmax = std::max(pmax, in.p[j]);
    fmax = std::max(fmax, in.F[j]);
  }
  return in;
}

// ---------------------------------------------------------------------------
// Flatness profile

struct ExcessRow {
  int j = 0;
  double r = 0.0;
  double F = 0.0;
  Eigen::MatrixXd M;
  double p = 0.0;            ///< Frobenius norm of M
  double contraction = 0.0;  ///< F_j / F_{j-1}; NaN for j = 0
  double normalized = 0.0;   ///< (1/r) inf_q (mean over B_r |u - q|^2)^{1/2}
};

struct ExcessProfile {
  double theta = 0.125;
  double epsilon = 0.0;
  double K = 0.0;
  std::vector<ExcessRow> rows;
  std::vector<std::string> warnings;
};

/// Excess at r_j = theta^{j+1} for every j with r_j >= eps, around `center`
/// (default: the origin).
inline ExcessProfile flatness_profile(const GridFunction& u, double eps, double theta, double K,
                                      std::vector<double> center = {}) {
  if (!(theta > 0.0 && theta < 0.25)) throw ValidationError("flatness_profile: theta must lie in (0, 1/4)");
  if (!(eps > 0.0 && eps < theta)) throw ValidationError("flatness_profile: need 0 < epsilon < theta");
  const int d = u.grid.dim();
  if (center.empty()) center.assign(static_cast<std::size_t>(d), 0.0);
  ball_nodes(u.grid, center, 1.0);  // B(0,1) must be covered
  ExcessProfile prof;
  prof.theta = theta;
  prof.epsilon = eps;
  prof.K = K;
  for (int j = 0;; ++j) {
    const double r = std::pow(theta, j + 1);
    if (r < eps * (1.0 - 1e-12)) break;
    const auto nodes = ball_nodes(u.grid, center, r);
    if (nodes.size() < static_cast<std::size_t>(d + 2)) {
      prof.warnings.push_back("profile truncated at r=" + std::to_string(r) + ": grid too coarse");
      break;
    }
    const auto ex = affine_excess_nodes(u, nodes, center, r);
    ExcessRow row;
    row.j = j;
    row.r = r;
    row.F = ex.F;
    row.M = ex.M;
    row.p = ex.M.norm();
    row.contraction = prof.rows.empty() || prof.rows.back().F == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                                                    : ex.F / prof.rows.back().F;
    row.normalized = constant_excess(u, center, r);
    prof.rows.push_back(std::move(row));
  }
  return prof;
}

// ---------------------------------------------------------------------------
// Improvement-step audit

struct AuditResult {
  double approx_error = 0.0;
  double contraction = 0.0;
};

/// Solves the homogenized problem L_0 w = 0 on the node box around B_r with Dirichlet
/// data u_eps and compares: approx_error = (mean_{B_r}|u-w|^2)^{1/2} / inf_q
/// (mean_{B_2r}|u-q|^2)^{1/2}, contraction = excess of w at theta*r over excess at r.
inline AuditResult improvement_step_audit(const GridFunction& u_eps, std::span<const double> center, double r,
                                          double theta, const CorrectorSet& cs, const EffectiveTensor& eff,
                                          double tol = kDefaultTol) {
  const Grid& g = u_eps.grid;
  const int d = g.dim();
  const int m = u_eps.components;
  if (!(theta > 0.0 && theta < 1.0)) throw ValidationError("audit: theta must lie in (0,1)");
  if (cs.dim() != d || eff.entries.dim() != d) throw ValidationError("audit: dimension mismatch");
  ball_nodes(g, center, 2.0 * r);  // B_2r inside the grid

  // node sub-box covering [center - r, center + r]
  std::vector<int> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
  std::vector<double> origin(static_cast<std::size_t>(d)), side(static_cast<std::size_t>(d));
  std::vector<int> cells(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    const double h = g.h(i);
    const double o = g.origin()[static_cast<std::size_t>(i)];
    lo[static_cast<std::size_t>(i)] = static_cast<int>(std::floor((center[static_cast<std::size_t>(i)] - r - o) / h + 1e-9));
    hi[static_cast<std::size_t>(i)] = static_cast<int>(std::ceil((center[static_cast<std::size_t>(i)] + r - o) / h - 1e-9));
    cells[static_cast<std::size_t>(i)] = hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)];
    origin[static_cast<std::size_t>(i)] = o + lo[static_cast<std::size_t>(i)] * h;
    side[static_cast<std::size_t>(i)] = cells[static_cast<std::size_t>(i)] * h;
  }
  const Grid sub(origin, side, cells, std::vector<bool>(static_cast<std::size_t>(d), false));
  auto parent_node = [&](std::size_t k) {
    std::size_t node = 0;
    for (int i = 0; i < d; ++i) node += static_cast<std::size_t>(sub.coord_index(k, i) + lo[static_cast<std::size_t>(i)]) * g.stride(i);
    return node;
  };
  const auto op = assemble(TensorField(eff.entries, {}, cs.field.mu()), sub, 1.0, 0.0, BoundaryKind::dirichlet);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(op.size()));
  GridFunction u_sub(sub, m);
  for (std::size_t k = 0; k < sub.node_count(); ++k) {
    const std::size_t pn = parent_node(k);
    for (int c = 0; c < m; ++c) {
      u_sub.at(k, c) = u_eps.at(pn, c);
      if (sub.on_boundary(k)) rhs(static_cast<Eigen::Index>(k * static_cast<std::size_t>(m) + static_cast<std::size_t>(c))) = u_eps.at(pn, c);
    }
  }
  const GridFunction w = krylov_solve(op, rhs, {tol, 0});

  AuditResult res;
  const auto br = ball_nodes(sub, center, r);
  double s = 0.0;
  for (auto k : br)
    for (int c = 0; c < m; ++c) s += std::pow(u_sub.at(k, c) - w.at(k, c), 2);
  const double num = std::sqrt(s / static_cast<double>(br.size()));
  const double den = constant_excess(u_eps, center, 2.0 * r) * 2.0 * r;
  res.approx_error = den > 0.0 ? num / den : 0.0;
  const double f_r = affine_excess(w, center, r).F;
  const double f_tr = affine_excess(w, center, theta * r).F;
  res.contraction = f_r > 0.0 ? f_tr / f_r : 0.0;
  return res;
}

}  // namespace homoglab
