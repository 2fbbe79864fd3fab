#pragma once

// Coefficient tensors A(y) as real trigonometric polynomials and their
// structural moduli: ellipticity, Lipschitz constant, the almost-periodicity
// modulus rho(R) and a power-of-log decay fit for it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "homoglab/error.hpp"

namespace homoglab {

/// Dense tensor a_{ij}^{alpha beta}, i,j in [0,d), alpha,beta in [0,m).
/// Storage order is ((i*d + j)*m + alpha)*m + beta.
class CoefTensor {
 public:
  CoefTensor() = default;
  CoefTensor(int d, int m) : d_(d), m_(m), data_(static_cast<std::size_t>(d * d * m * m), 0.0) {
    if (d < 1 || m < 1) throw ValidationError("CoefTensor: d and m must be >= 1");
  }

  /// c * delta_ij * delta_alpha_beta
  static CoefTensor isotropic(int d, int m, double c) {
    CoefTensor t(d, m);
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < m; ++a) t(i, i, a, a) = c;
    return t;
  }

  static CoefTensor from_values(int d, int m, std::vector<double> values) {
    CoefTensor t(d, m);
    if (values.size() != t.data_.size())
      throw ValidationError("CoefTensor: expected " + std::to_string(t.data_.size()) +
                            " entries, got " + std::to_string(values.size()));
    t.data_ = std::move(values);
    return t;
  }

  int dim() const noexcept { return d_; }
  int systems() const noexcept { return m_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(int i, int j, int a, int b) const noexcept {
    return static_cast<std::size_t>(((i * d_ + j) * m_ + a) * m_ + b);
  }
  double& operator()(int i, int j, int a, int b) noexcept { return data_[index(i, j, a, b)]; }
  double operator()(int i, int j, int a, int b) const noexcept { return data_[index(i, j, a, b)]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool is_zero() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
  }

  double max_abs() const noexcept {
    double r = 0.0;
    for (double v : data_) r = std::max(r, std::abs(v));
    return r;
  }

  /// The (d*m) x (d*m) matrix of the bilinear form xi -> a_ij^ab xi_i^a xi_j^b,
  /// rows indexed by i*m + alpha.
  Eigen::MatrixXd as_matrix() const {
    const int n = d_ * m_;
    Eigen::MatrixXd mat(n, n);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        for (int a = 0; a < m_; ++a)
          for (int b = 0; b < m_; ++b) mat(i * m_ + a, j * m_ + b) = (*this)(i, j, a, b);
    return mat;
  }

  /// Largest singular value of as_matrix().
  double operator_norm() const {
    if (is_zero()) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(as_matrix());
    return svd.singularValues()(0);
  }

  /// a_ij^ab == a_ji^ba for all indices.
  bool is_symmetric() const noexcept {
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        for (int a = 0; a < m_; ++a)
          for (int b = 0; b < m_; ++b)
            if ((*this)(i, j, a, b) != (*this)(j, i, b, a)) return false;
    return true;
  }

  CoefTensor& operator+=(const CoefTensor& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }

  bool operator==(const CoefTensor&) const = default;

 private:
  int d_ = 0;
  int m_ = 0;
  std::vector<double> data_;
};

/// One trigonometric mode: cos_amp*cos(freq.y) + sin_amp*sin(freq.y).
struct Mode {
  std::vector<double> freq;
  CoefTensor cos_amp;
  CoefTensor sin_amp;

  double frequency_norm() const noexcept {
    double s = 0.0;
    for (double w : freq) s += w * w;
    return std::sqrt(s);
  }

  bool operator==(const Mode&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// A(y) = mean + sum_k cos_amp_k cos(w_k.y) + sin_amp_k sin(w_k.y).
/// Immutable after construction.
class TensorField {
 public:
  TensorField() = default;

  TensorField(CoefTensor mean, std::vector<Mode> modes, double mu,
              std::optional<std::vector<double>> period_lattice = std::nullopt)
      : d_(mean.dim()),
        m_(mean.systems()),
        mean_(std::move(mean)),
        modes_(std::move(modes)),
        mu_(mu),
        period_lattice_(std::move(period_lattice)) {
    if (!(mu_ > 0.0)) throw ValidationError("TensorField: mu must be > 0");
    for (const Mode& mode : modes_) {
      if (static_cast<int>(mode.freq.size()) != d_)
        throw ValidationError("TensorField: mode frequency has wrong dimension");
      if (mode.cos_amp.dim() != d_ || mode.cos_amp.systems() != m_ || mode.sin_amp.dim() != d_ ||
          mode.sin_amp.systems() != m_)
        throw ValidationError("TensorField: mode amplitude has wrong shape");
    }
    if (period_lattice_) {
      if (static_cast<int>(period_lattice_->size()) != d_)
        throw ValidationError("TensorField: period lattice has wrong dimension");
      for (double p : *period_lattice_)
        if (!(p > 0.0)) throw ValidationError("TensorField: periods must be > 0");
    }
  }

  /// Constant field c*I.
  static TensorField constant(int d, int m, double c, double mu) {
    std::vector<double> period(static_cast<std::size_t>(d), 2.0 * std::numbers::pi);
    return TensorField(CoefTensor::isotropic(d, m, c), {}, mu, period);
  }

  int dim() const noexcept { return d_; }
  int systems() const noexcept { return m_; }
  double mu() const noexcept { return mu_; }
  const CoefTensor& mean() const noexcept { return mean_; }
  const std::vector<Mode>& modes() const noexcept { return modes_; }
  const std::optional<std::vector<double>>& period_lattice() const noexcept {
    return period_lattice_;
  }

  bool is_constant() const noexcept {
    return std::all_of(modes_.begin(), modes_.end(), [](const Mode& md) {
      return md.cos_amp.is_zero() && md.sin_amp.is_zero();
    });
  }

  /// Writes A(y) into out (size d*d*m*m, CoefTensor storage order).
  void evaluate_into(std::span<const double> y, std::span<double> out) const noexcept {
    const auto mean = mean_.values();
    std::copy(mean.begin(), mean.end(), out.begin());
    for (const Mode& mode : modes_) {
      const double phase = dot(mode.freq, y);
      const double c = std::cos(phase);
      const double s = std::sin(phase);
      const auto ca = mode.cos_amp.values();
      const auto sa = mode.sin_amp.values();
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += ca[k] * c + sa[k] * s;
    }
  }

  CoefTensor evaluate(std::span<const double> y) const {
    if (static_cast<int>(y.size()) != d_) throw ValidationError("evaluate: point has wrong dimension");
    CoefTensor t(d_, m_);
    evaluate_into(y, t.values());
    return t;
  }

  /// The field y -> A(y + shift).
  TensorField translated(std::span<const double> shift) const {
    std::vector<Mode> modes = modes_;
    for (Mode& mode : modes) {
      const double phase = dot(mode.freq, shift);
      const double c = std::cos(phase);
      const double s = std::sin(phase);
      CoefTensor ca(d_, m_);
      CoefTensor sa(d_, m_);
      for (std::size_t k = 0; k < ca.size(); ++k) {
        ca.values()[k] = mode.cos_amp.values()[k] * c + mode.sin_amp.values()[k] * s;
        sa.values()[k] = mode.sin_amp.values()[k] * c - mode.cos_amp.values()[k] * s;
      }
      mode.cos_amp = std::move(ca);
      mode.sin_amp = std::move(sa);
    }
    return TensorField(mean_, std::move(modes), mu_, period_lattice_);
  }

  /// Field with each frequency rounded to the nearest point of (2 pi / box_side) Z^d,
  /// and the rounding magnitude max_k |w_k - w~_k|. The result is box-periodic.
  std::pair<TensorField, double> periodized(double box_side) const {
    if (!(box_side > 0.0)) throw ValidationError("periodized: box side must be > 0");
    const double quantum = 2.0 * std::numbers::pi / box_side;
    double err = 0.0;
    std::vector<Mode> modes = modes_;
    for (Mode& mode : modes) {
      double e2 = 0.0;
      for (double& w : mode.freq) {
        const double rounded = std::round(w / quantum) * quantum;
        e2 += (w - rounded) * (w - rounded);
        w = rounded;
      }
      err = std::max(err, std::sqrt(e2));
    }
    std::vector<double> period(static_cast<std::size_t>(d_), box_side);
    return {TensorField(mean_, std::move(modes), mu_, period), err};
  }

  double max_frequency() const noexcept {
    double w = 0.0;
    for (const Mode& mode : modes_)
      if (!(mode.cos_amp.is_zero() && mode.sin_amp.is_zero())) w = std::max(w, mode.frequency_norm());
    return w;
  }

  /// Smallest nonzero active frequency norm (0 for a constant field).
  double min_frequency() const noexcept {
    double w = std::numeric_limits<double>::infinity();
    for (const Mode& mode : modes_) {
      const double n = mode.frequency_norm();
      if (n > 0.0 && !(mode.cos_amp.is_zero() && mode.sin_amp.is_zero())) w = std::min(w, n);
    }
    return std::isfinite(w) ? w : 0.0;
  }

  /// 2 pi / max_k |w_k|; infinite for a constant field.
  double oscillation_scale() const noexcept {
    const double w = max_frequency();
    return w > 0.0 ? 2.0 * std::numbers::pi / w : std::numeric_limits<double>::infinity();
  }

  /// Entrywise bound |mean| + sum_k (|cos_amp_k| + |sin_amp_k|), maximized over entries.
  double sup_bound() const noexcept {
    double best = 0.0;
    for (std::size_t k = 0; k < mean_.size(); ++k) {
      double s = std::abs(mean_.values()[k]);
      for (const Mode& mode : modes_)
        s += std::abs(mode.cos_amp.values()[k]) + std::abs(mode.sin_amp.values()[k]);
      best = std::max(best, s);
    }
    return best;
  }

  /// sup_y ||A(y)||_op <= ||mean||_op + sum_k (||cos_amp_k||_op + ||sin_amp_k||_op).
  double operator_norm_bound() const {
    double s = mean_.operator_norm();
    for (const Mode& mode : modes_) s += mode.cos_amp.operator_norm() + mode.sin_amp.operator_norm();
    return s;
  }

  bool is_symmetric() const noexcept {
    if (!mean_.is_symmetric()) return false;
    return std::all_of(modes_.begin(), modes_.end(), [](const Mode& md) {
      return md.cos_amp.is_symmetric() && md.sin_amp.is_symmetric();
    });
  }

  /// True when a_ij^ab vanishes identically for every i != j.
  bool has_no_cross_terms() const noexcept {
    auto zero_cross = [this](const CoefTensor& t) {
      for (int i = 0; i < d_; ++i)
        for (int j = 0; j < d_; ++j)
          if (i != j)
            for (int a = 0; a < m_; ++a)
              for (int b = 0; b < m_; ++b)
                if (t(i, j, a, b) != 0.0) return false;
      return true;
    };
    if (!zero_cross(mean_)) return false;
    return std::all_of(modes_.begin(), modes_.end(), [&](const Mode& md) {
      return zero_cross(md.cos_amp) && zero_cross(md.sin_amp);
    });
  }

  bool operator==(const TensorField&) const = default;

 private:
  int d_ = 0;
  int m_ = 0;
  CoefTensor mean_;
  std::vector<Mode> modes_;
  double mu_ = 1.0;
  std::optional<std::vector<double>> period_lattice_;
};

// ---------------------------------------------------------------------------
// Common field constructors used by tests, configs and demos.

/// Scalar field c0 + sum_k amp_k sin(w_k y_axis) in d dimensions, isotropic.
inline TensorField scalar_sine_field(int d, double c0, std::vector<std::pair<double, double>> amp_freq,
                                     double mu, int axis = 0,
                                     std::optional<std::vector<double>> period = std::nullopt) {
  std::vector<Mode> modes;
  for (auto [amp, w] : amp_freq) {
    Mode md;
    md.freq.assign(static_cast<std::size_t>(d), 0.0);
    md.freq[static_cast<std::size_t>(axis)] = w;
    md.cos_amp = CoefTensor(d, 1);
    md.sin_amp = CoefTensor::isotropic(d, 1, amp);
    modes.push_back(std::move(md));
  }
  return TensorField(CoefTensor::isotropic(d, 1, c0), std::move(modes), mu, std::move(period));
}

// ---------------------------------------------------------------------------
// Ellipticity and Lipschitz moduli.

struct EllipticityReport {
  double mu_lower = 0.0;  ///< min observed Rayleigh quotient
  double mu_upper = 0.0;  ///< max observed Rayleigh quotient
  bool pass = false;      ///< mu <= mu_lower and mu_upper <= 1/mu (1e-12 slack)
};

/// Samples (y, xi) pairs, |xi| = 1, and compares the bilinear form against mu and 1/mu.
/// Points are drawn from one period cell when a lattice is known, else from [-100, 100]^d.
inline EllipticityReport ellipticity_check(const TensorField& field, int sample_count,
                                           std::uint64_t seed) {
  if (sample_count < 1) throw ValidationError("ellipticity_check: sampleCount must be >= 1");
  const int d = field.dim();
  const int m = field.systems();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  EllipticityReport rep;
  rep.mu_lower = std::numeric_limits<double>::infinity();
  rep.mu_upper = -std::numeric_limits<double>::infinity();
  std::vector<double> y(static_cast<std::size_t>(d));
  std::vector<double> xi(static_cast<std::size_t>(d * m));
  CoefTensor a(d, m);
  for (int s = 0; s < sample_count; ++s) {
    for (int i = 0; i < d; ++i) {
      const double u = unit(rng);
      y[static_cast<std::size_t>(i)] = field.period_lattice()
                                           ? u * (*field.period_lattice())[static_cast<std::size_t>(i)]
                                           : -100.0 + 200.0 * u;
    }
    double nrm = 0.0;
    for (double& v : xi) {
      v = normal(rng);
      nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    for (double& v : xi) v /= nrm;
    field.evaluate_into(y, a.values());
    double q = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int al = 0; al < m; ++al)
          for (int be = 0; be < m; ++be)
            q += a(i, j, al, be) * xi[static_cast<std::size_t>(i * m + al)] *
                 xi[static_cast<std::size_t>(j * m + be)];
    rep.mu_lower = std::min(rep.mu_lower, q);
    rep.mu_upper = std::max(rep.mu_upper, q);
  }
  const double mu = field.mu();
  rep.pass = mu <= rep.mu_lower + 1e-12 && rep.mu_upper <= 1.0 / mu + 1e-12;
  return rep;
}

struct HolderModulus {
  double tau = 0.0;
  double lambda = 1.0;
};

/// Certified Lipschitz bound: |A(x) - A(y)|_max <= tau |x - y| with
/// tau = max over entries of sum_k |w_k| (|cos_amp_k| + |sin_amp_k|).
inline HolderModulus holder_modulus(const TensorField& field) {
  HolderModulus hm;
  for (std::size_t e = 0; e < field.mean().size(); ++e) {
    double s = 0.0;
    for (const Mode& mode : field.modes())
      s += mode.frequency_norm() *
           (std::abs(mode.cos_amp.values()[e]) + std::abs(mode.sin_amp.values()[e]));
    hm.tau = std::max(hm.tau, s);
  }
  return hm;
}

// ---------------------------------------------------------------------------
// Almost-periodicity modulus rho(R) = sup_y inf_{|z|<=R} ||A(.+y) - A(.+z)||_inf.

struct RhoSearch {
  int y_samples = 64;           ///< lattice points for the sup over y (total, split per axis)
  double y_range = 0.0;         ///< y drawn from [0, y_range)^d; 0 means 2*domain_radius
  double z_grid_step = 0.25;    ///< starting step of the z lattice
  double domain_radius = 50.0;  ///< sup-norm window is [-domain_radius, domain_radius]^d
  double window_step = 0.25;    ///< lattice step inside the window
  int refine_levels = 3;        ///< z step halvings around the best z
  double refine_tol = 1e-3;     ///< stop refining once the improvement is below this
};

/// Point estimate plus a bias interval. lower is a certified lower bound for the
/// sup over the sampled y region; upper accounts for window and lattice spacing but
/// not for the part of R^d outside the window.
struct RhoValue {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

namespace detail {

// Window sample with precomputed cos/sin of w_k.x, visited in a scrambled order so the
// pruned sup search meets large values early.
struct RhoWindow {
  std::size_t points = 0;
  std::size_t modes = 0;
  std::vector<double> cos_table;  // [point][mode]
  std::vector<double> sin_table;
};

inline std::vector<std::vector<double>> lattice_points(int d, double lo, double step, int count) {
  std::vector<std::vector<double>> pts;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(count);
  pts.reserve(total);
  for (std::size_t t = 0; t < total; ++t) {
    std::size_t rem = t;
    std::vector<double> p(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      p[static_cast<std::size_t>(i)] = lo + step * static_cast<double>(rem % static_cast<std::size_t>(count));
      rem /= static_cast<std::size_t>(count);
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

inline RhoWindow make_window(const TensorField& field, const RhoSearch& s) {
  const int d = field.dim();
  const int count = std::max(1, static_cast<int>(std::floor(2.0 * s.domain_radius / s.window_step)) + 1);
  auto pts = lattice_points(d, -s.domain_radius, s.window_step, count);
  // Multiplicative scramble with a stride coprime to the point count.
  const std::size_t n = pts.size();
  std::size_t stride = static_cast<std::size_t>(static_cast<double>(n) * 0.6180339887498949) | 1u;
  while (std::gcd(stride, n) != 1) stride += 2;
  RhoWindow w;
  w.points = n;
  w.modes = field.modes().size();
  w.cos_table.resize(n * w.modes);
  w.sin_table.resize(n * w.modes);
  for (std::size_t q = 0; q < n; ++q) {
    const auto& x = pts[(q * stride) % n];
    for (std::size_t k = 0; k < w.modes; ++k) {
      const double ph = dot(field.modes()[k].freq, x);
      w.cos_table[q * w.modes + k] = std::cos(ph);
      w.sin_table[q * w.modes + k] = std::sin(ph);
    }
  }
  return w;
}

// Coefficients (P, Q) of A(x + y) - mean = sum_k P_k cos(w_k.x) + Q_k sin(w_k.x), for the
// active entries only. Layout [mode][active entry].
struct ShiftCoeffs {
  std::vector<double> p;
  std::vector<double> q;
};

inline ShiftCoeffs shift_coeffs(const TensorField& field, const std::vector<std::size_t>& entries,
                                std::span<const double> y) {
  const std::size_t ne = entries.size();
  ShiftCoeffs c;
  c.p.resize(field.modes().size() * ne);
  c.q.resize(field.modes().size() * ne);
  for (std::size_t k = 0; k < field.modes().size(); ++k) {
    const Mode& mode = field.modes()[k];
    const double ph = dot(mode.freq, y);
    const double cy = std::cos(ph);
    const double sy = std::sin(ph);
    for (std::size_t e = 0; e < ne; ++e) {
      const double ca = mode.cos_amp.values()[entries[e]];
      const double sa = mode.sin_amp.values()[entries[e]];
      c.p[k * ne + e] = ca * cy + sa * sy;
      c.q[k * ne + e] = sa * cy - ca * sy;
    }
  }
  return c;
}

// Sampled sup over the window of |A(.+y) - A(.+z)|_max; stops early once `cutoff` is exceeded.
inline double shift_sup(const RhoWindow& w, const ShiftCoeffs& cy, const ShiftCoeffs& cz,
                        std::size_t ne, double cutoff, std::vector<double>& dp, std::vector<double>& dq) {
  const std::size_t nm = w.modes;
  dp.resize(nm * ne);
  dq.resize(nm * ne);
  for (std::size_t t = 0; t < nm * ne; ++t) {
    dp[t] = cy.p[t] - cz.p[t];
    dq[t] = cy.q[t] - cz.q[t];
  }
  double sup = 0.0;
  for (std::size_t q = 0; q < w.points; ++q) {
    const double* ct = &w.cos_table[q * nm];
    const double* st = &w.sin_table[q * nm];
    for (std::size_t e = 0; e < ne; ++e) {
      double v = 0.0;
      for (std::size_t k = 0; k < nm; ++k) v += dp[k * ne + e] * ct[k] + dq[k * ne + e] * st[k];
      sup = std::max(sup, std::abs(v));
    }
    if (sup > cutoff) return sup;
  }
  return sup;
}

inline std::vector<std::size_t> active_entries(const TensorField& field) {
  std::vector<std::size_t> e;
  for (std::size_t k = 0; k < field.mean().size(); ++k)
    for (const Mode& mode : field.modes())
      if (mode.cos_amp.values()[k] != 0.0 || mode.sin_amp.values()[k] != 0.0) {
        e.push_back(k);
        break;
      }
  return e;
}

}  // namespace detail

/// Grid estimate of rho(R). The y sup runs over a lattice in [0, y_range)^d, the z inf over
/// the lattice z_grid_step*Z^d within |z| <= R followed by local step-halving refinement,
/// and each shift difference is maximized over the window lattice.
inline RhoValue rho(const TensorField& field, double radius, const RhoSearch& search = {}) {
  if (!(radius > 0.0)) throw ValidationError("rho: R must be > 0");
  if (search.y_samples < 1 || !(search.z_grid_step > 0.0) || !(search.domain_radius > 0.0) ||
      !(search.window_step > 0.0))
    throw ValidationError("rho: search parameters must be positive");
  if (field.is_constant()) return {};
  if (const auto& lat = field.period_lattice()) {
    // Every y has a lattice translate within half the cell diagonal.
    double diag2 = 0.0;
    for (double L : *lat) diag2 += 0.25 * L * L;
    if (radius >= std::sqrt(diag2)) return {};
  }

  const int d = field.dim();
  const double tau = holder_modulus(field).tau;
  const auto entries = detail::active_entries(field);
  const std::size_t ne = entries.size();
  const detail::RhoWindow window = detail::make_window(field, search);

  // z lattice inside the ball |z| <= R.
  const int zmax = static_cast<int>(std::floor(radius / search.z_grid_step));
  std::vector<std::vector<double>> zs;
  for (auto& z : detail::lattice_points(d, -zmax * search.z_grid_step, search.z_grid_step, 2 * zmax + 1)) {
    if (std::sqrt(dot(z, z)) <= radius * (1.0 + 1e-12)) zs.push_back(std::move(z));
  }
  std::vector<detail::ShiftCoeffs> zc;
  zc.reserve(zs.size());
  for (const auto& z : zs) zc.push_back(detail::shift_coeffs(field, entries, z));

  const double y_range = search.y_range > 0.0 ? search.y_range : 2.0 * search.domain_radius;
  const int per_axis = std::max(1, static_cast<int>(std::ceil(std::pow(search.y_samples, 1.0 / d) - 1e-9)));
  const double y_step = y_range / per_axis;
  const auto ys = detail::lattice_points(d, 0.0, y_step, per_axis);

  const double sqrt_d = std::sqrt(static_cast<double>(d));
  const double z_cover = tau * search.z_grid_step * sqrt_d / 2.0;
  const double x_cover = 2.0 * tau * search.window_step * sqrt_d / 2.0;
  const double y_cover = tau * y_step * sqrt_d / 2.0;

  RhoValue out;
  std::vector<double> dp, dq;
  for (const auto& y : ys) {
    if (const auto& lat = field.period_lattice()) {
      // The nearest lattice translate of y reproduces A(.+y) exactly.
      std::vector<double> z(y);
      for (int i = 0; i < d; ++i) {
        const double L = (*lat)[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(i)] -= L * std::round(z[static_cast<std::size_t>(i)] / L);
      }
      if (std::sqrt(dot(z, z)) <= radius) continue;
    }
    const auto cy = detail::shift_coeffs(field, entries, y);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t k = 0; k < zs.size(); ++k) {
      const double v = detail::shift_sup(window, cy, zc[k], ne, best, dp, dq);
      if (v < best) {
        best = v;
        best_idx = k;
      }
    }
    const double coarse = best;
    std::vector<double> zbest = zs[best_idx];
    double step = search.z_grid_step;
    for (int level = 0; level < search.refine_levels && best > 0.0; ++level) {
      step /= 2.0;
      const double before = best;
      std::vector<double> center = zbest;
      for (const auto& off : detail::lattice_points(d, -2.0 * step, step, 5)) {
        std::vector<double> z(center);
        for (int i = 0; i < d; ++i) z[static_cast<std::size_t>(i)] += off[static_cast<std::size_t>(i)];
        if (std::sqrt(dot(z, z)) > radius * (1.0 + 1e-12)) continue;
        const double v = detail::shift_sup(window, cy, detail::shift_coeffs(field, entries, z), ne, best, dp, dq);
        if (v < best) {
          best = v;
          zbest = z;
        }
      }
      if (before - best < search.refine_tol) break;
    }
    out.estimate = std::max(out.estimate, best);
    out.lower = std::max(out.lower, std::max(0.0, coarse - z_cover));
    out.upper = std::max(out.upper, best + x_cover);
  }
  out.upper += y_cover;
  return out;
}

struct RhoTable {
  std::vector<double> radii;   ///< increasing
  std::vector<double> values;  ///< nonincreasing estimates
  std::vector<double> lower;
  std::vector<double> upper;
  RhoSearch search;
};

/// rho over increasing radii. Since any z admissible for R1 is admissible for R2 > R1,
/// the running minimum of the estimates is itself a valid estimate; it is stored.
inline RhoTable rho_table(const TensorField& field, std::vector<double> radii, const RhoSearch& search = {}) {
  if (radii.empty()) throw ValidationError("rho_table: radii must be nonempty");
  if (!std::is_sorted(radii.begin(), radii.end()) ||
      std::adjacent_find(radii.begin(), radii.end()) != radii.end())
    throw ValidationError("rho_table: radii must be strictly increasing");
  RhoTable t;
  t.search = search;
  double running = std::numeric_limits<double>::infinity();
  double running_lower = std::numeric_limits<double>::infinity();
  for (double r : radii) {
    const RhoValue v = rho(field, r, search);
    running = std::min(running, v.estimate);
    running_lower = std::min(running_lower, v.lower);
    t.radii.push_back(r);
    t.values.push_back(running);
    t.lower.push_back(running_lower);
    t.upper.push_back(v.upper);
  }
  return t;
}

/// Table built from a closed-form model, for tests and synthetic experiments.
template <class Fn>
RhoTable rho_table_from_model(std::vector<double> radii, Fn&& model) {
  RhoTable t;
  for (double r : radii) {
    const double v = model(r);
    t.radii.push_back(r);
    t.values.push_back(v);
    t.lower.push_back(v);
    t.upper.push_back(v);
  }
  return t;
}

enum class DecayStatus { ok, compact_support, degenerate, insufficient };

inline std::string to_string(DecayStatus s) {
  switch (s) {
    case DecayStatus::ok: return "ok";
    case DecayStatus::compact_support: return "compactly supported modulus";
    case DecayStatus::degenerate: return "degenerate";
    case DecayStatus::insufficient: return "insufficient";
  }
  return "unknown";
}

struct DecayFit {
  double c0 = 0.0;
  double n = std::numeric_limits<double>::quiet_NaN();
  double residual = 0.0;  ///< RMS residual of the log-log fit
  DecayStatus status = DecayStatus::insufficient;
  std::size_t used = 0;
};

/// Least-squares fit of log rho(R) = log C0 - N log log R over entries with R >= 4, rho > 0.
inline DecayFit decay_fit(const RhoTable& table) {
  DecayFit fit;
  std::vector<double> xs, ys;
  bool zero_seen = false;
  for (std::size_t k = 0; k < table.radii.size(); ++k) {
    if (table.radii[k] < 4.0) continue;
    if (table.values[k] <= 0.0) {
      zero_seen = true;
      continue;
    }
    xs.push_back(std::log(std::log(table.radii[k])));
    ys.push_back(std::log(table.values[k]));
  }
  fit.used = xs.size();
  if (xs.size() < 3) {
    fit.status = zero_seen ? DecayStatus::compact_support : DecayStatus::insufficient;
    return fit;
  }
  const double ymin = *std::min_element(ys.begin(), ys.end());
  const double ymax = *std::max_element(ys.begin(), ys.end());
  if (ymax - ymin <= 1e-14 * std::max(1.0, std::abs(ymax))) {
    fit.status = DecayStatus::degenerate;
    return fit;
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sx += xs[k];
    sy += ys[k];
    sxx += xs[k] * xs[k];
    sxy += xs[k] * ys[k];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icept = (sy - slope * sx) / n;
  double rss = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = ys[k] - (icept + slope * xs[k]);
    rss += r * r;
  }
  fit.n = -slope;
  fit.c0 = std::exp(icept);
  fit.residual = std::sqrt(rss / n);
  fit.status = DecayStatus::ok;
  return fit;
}

}  // namespace homoglab
