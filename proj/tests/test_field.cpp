#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "homoglab/field.hpp"

using namespace homoglab;

namespace {

constexpr double kPi = std::numbers::pi;

TensorField one_d(double mu = 1.0 / 3.0) {
  return scalar_sine_field(1, 2.0, {{1.0, 1.0}}, mu, 0, std::vector<double>{2 * kPi});
}

TensorField quasi_periodic() { return scalar_sine_field(1, 2.0, {{0.5, 1.0}, {0.5, std::sqrt(2.0)}}, 1.0 / 3.0); }

// Two-mode 2x2 system in 2D with cross terms, used for reference evaluations.
TensorField system_field() {
  CoefTensor mean = CoefTensor::isotropic(2, 2, 3.0);
  Mode a;
  a.freq = {1.0, std::sqrt(3.0)};
  a.cos_amp = CoefTensor(2, 2);
  a.sin_amp = CoefTensor(2, 2);
  a.cos_amp(0, 1, 0, 1) = 0.2;
  a.sin_amp(1, 1, 1, 0) = -0.3;
  Mode b;
  b.freq = {-2.0, 0.5};
  b.cos_amp = CoefTensor::isotropic(2, 2, 0.25);
  b.sin_amp = CoefTensor(2, 2);
  b.sin_amp(0, 0, 1, 1) = 0.4;
  return TensorField(mean, {a, b}, 0.2);
}

}  // namespace

TEST(Evaluate, ConstantFieldReturnsMean) {
  const auto f = TensorField::constant(2, 1, 2.0, 0.5);
  const std::vector<double> y{3.7, -11.0};
  const auto a = f.evaluate(y);
  EXPECT_EQ(a(0, 0, 0, 0), 2.0);
  EXPECT_EQ(a(1, 1, 0, 0), 2.0);
  EXPECT_EQ(a(0, 1, 0, 0), 0.0);
}

TEST(Evaluate, SineAtHalfPi) {
  const std::vector<double> y{kPi / 2};
  EXPECT_NEAR(one_d().evaluate(y)(0, 0, 0, 0), 3.0, 1e-15);
}

TEST(Evaluate, LaminateIgnoresSecondCoordinate) {
  const auto lam = scalar_sine_field(2, 2.0, {{1.0, 1.0}}, 1.0 / 3.0);
  const std::vector<double> y{kPi / 2, 7.3};
  const auto a = lam.evaluate(y);
  EXPECT_NEAR(a(0, 0, 0, 0), 3.0, 1e-15);
  EXPECT_NEAR(a(1, 1, 0, 0), 3.0, 1e-15);
  const std::vector<double> y2{kPi / 2, -40.0};
  EXPECT_EQ(lam.evaluate(y2)(0, 0, 0, 0), a(0, 0, 0, 0));
}

TEST(Evaluate, MatchesDirectModeSum) {
  const auto f = system_field();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int s = 0; s < 200; ++s) {
    const std::vector<double> y{u(rng), u(rng)};
    const auto a = f.evaluate(y);
    for (std::size_t e = 0; e < a.size(); ++e) {
      double ref = f.mean().values()[e];
      for (const auto& m : f.modes()) {
        const double ph = m.freq[0] * y[0] + m.freq[1] * y[1];
        ref += m.cos_amp.values()[e] * std::cos(ph) + m.sin_amp.values()[e] * std::sin(ph);
      }
      EXPECT_NEAR(a.values()[e], ref, 1e-14);
    }
  }
}

TEST(Evaluate, PeriodLatticeInvariance) {
  const auto lam = scalar_sine_field(2, 2.0, {{1.0, 3.0}}, 1.0 / 3.0, 1, std::vector<double>{2 * kPi, 2 * kPi / 3});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int s = 0; s < 100; ++s) {
    const std::vector<double> y{u(rng), u(rng)};
    const std::vector<double> y1{y[0] + 2 * kPi, y[1]};
    const std::vector<double> y2{y[0], y[1] + 2 * kPi / 3};
    EXPECT_NEAR(lam.evaluate(y1)(1, 1, 0, 0), lam.evaluate(y)(1, 1, 0, 0), 1e-13);
    EXPECT_NEAR(lam.evaluate(y2)(1, 1, 0, 0), lam.evaluate(y)(1, 1, 0, 0), 1e-13);
  }
}

TEST(Evaluate, BoundedByMeanPlusAmplitudes) {
  const auto f = system_field();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int s = 0; s < 500; ++s) {
    const std::vector<double> y{u(rng), u(rng)};
    const auto a = f.evaluate(y);
    for (std::size_t e = 0; e < a.size(); ++e) {
      double bound = std::abs(f.mean().values()[e]);
      for (const auto& m : f.modes()) bound += std::abs(m.cos_amp.values()[e]) + std::abs(m.sin_amp.values()[e]);
      EXPECT_LE(std::abs(a.values()[e]), bound + 1e-14);
    }
  }
}

TEST(TensorFieldCtor, RejectsBadShapes) {
  EXPECT_THROW(TensorField(CoefTensor::isotropic(2, 1, 1.0), {}, 0.0), ValidationError);
  Mode m;
  m.freq = {1.0};
  m.cos_amp = CoefTensor(2, 1);
  m.sin_amp = CoefTensor(2, 1);
  EXPECT_THROW(TensorField(CoefTensor::isotropic(2, 1, 1.0), {m}, 0.5), ValidationError);
  EXPECT_THROW(TensorField(CoefTensor::isotropic(2, 1, 1.0), {}, 0.5, std::vector<double>{1.0}), ValidationError);
}

TEST(Ellipticity, ConstantTwoIdentity) {
  const auto rep = ellipticity_check(TensorField::constant(2, 1, 2.0, 0.5), 500, 1);
  EXPECT_NEAR(rep.mu_lower, 2.0, 1e-12);
  EXPECT_NEAR(rep.mu_upper, 2.0, 1e-12);
  EXPECT_TRUE(rep.pass);
}

TEST(Ellipticity, TwoPlusSinePasses) {
  const auto rep = ellipticity_check(one_d(), 2000, 2);
  EXPECT_GE(rep.mu_lower, 1.0 - 1e-12);
  EXPECT_LE(rep.mu_upper, 3.0 + 1e-12);
  EXPECT_TRUE(rep.pass);
}

TEST(Ellipticity, ClaimedMuTooLargeFails) {
  // values reach 1 + delta near 3 pi / 2 on a fine sample
  const auto rep = ellipticity_check(one_d(1.5), 4000, 3);
  EXPECT_FALSE(rep.pass);
  EXPECT_LT(rep.mu_lower, 1.01);
}

TEST(Ellipticity, UpperBoundIsEnforced) {
  // 2 + sin y reaches 3 > 1/mu for mu = 1
  EXPECT_FALSE(ellipticity_check(one_d(1.0), 4000, 4).pass);
}

TEST(Holder, Examples) {
  EXPECT_EQ(holder_modulus(TensorField::constant(2, 1, 2.0, 0.5)).tau, 0.0);
  EXPECT_NEAR(holder_modulus(one_d()).tau, 1.0, 1e-15);
  const auto two = scalar_sine_field(1, 2.0, {{1.0, 1.0}, {1.0, std::sqrt(2.0)}}, 0.25);
  EXPECT_NEAR(holder_modulus(two).tau, 1.0 + std::sqrt(2.0), 1e-14);
  EXPECT_EQ(holder_modulus(two).lambda, 1.0);
}

TEST(Holder, CertifiedOnRandomPairs) {
  const auto f = system_field();
  const double tau = holder_modulus(f).tau;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20.0, 20.0), small(-0.5, 0.5);
  int violations = 0;
  for (int s = 0; s < 10000; ++s) {
    const std::vector<double> x{u(rng), u(rng)};
    const std::vector<double> y{x[0] + small(rng), x[1] + small(rng)};
    const auto a = f.evaluate(x), b = f.evaluate(y);
    double diff = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) diff = std::max(diff, std::abs(a.values()[e] - b.values()[e]));
    const double dist = std::hypot(x[0] - y[0], x[1] - y[1]);
    if (diff > tau * dist + 1e-14) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Rho, ConstantFieldIsZero) {
  const auto v = rho(TensorField::constant(2, 1, 2.0, 0.5), 1.0);
  EXPECT_EQ(v.estimate, 0.0);
  EXPECT_EQ(v.lower, 0.0);
  EXPECT_EQ(v.upper, 0.0);
}

TEST(Rho, PeriodicTranslateWithinOnePeriod) {
  RhoSearch s;
  const auto v = rho(one_d(), 2 * kPi, s);
  EXPECT_LE(v.estimate, s.z_grid_step);
  EXPECT_GE(v.estimate, 0.0);
}

TEST(Rho, RejectsNonpositiveRadius) {
  EXPECT_THROW(rho(one_d(), 0.0), ValidationError);
  EXPECT_THROW(rho(one_d(), -1.0), ValidationError);
}

// Brute-force oracle: y over [0,100] step 0.25, z over [-4,4] step 0.01, sup over the
// window [-50,50] step 0.05.
TEST(Rho, QuasiPeriodicMatchesGridSearchOracle) {
  const double w2 = std::sqrt(2.0);
  std::vector<double> s1, c1, s2, c2;
  for (int k = 0; k <= 2000; ++k) {
    const double x = -50.0 + 0.05 * k;
    s1.push_back(std::sin(x));
    c1.push_back(std::cos(x));
    s2.push_back(std::sin(w2 * x));
    c2.push_back(std::cos(w2 * x));
  }
  double oracle = 0.0;
  for (int iy = 0; iy <= 400; ++iy) {
    const double y = 0.25 * iy;
    double best = 1e9;
    for (int iz = 0; iz <= 800; ++iz) {
      const double z = -4.0 + 0.01 * iz;
      const double a1 = std::cos(y) - std::cos(z), b1 = std::sin(y) - std::sin(z);
      const double a2 = std::cos(w2 * y) - std::cos(w2 * z), b2 = std::sin(w2 * y) - std::sin(w2 * z);
      double m = 0.0;
      for (std::size_t k = 0; k < s1.size() && m < best; ++k)
        m = std::max(m, 0.5 * std::abs(s1[k] * a1 + c1[k] * b1 + s2[k] * a2 + c2[k] * b2));
      best = std::min(best, m);
    }
    oracle = std::max(oracle, best);
  }
  const auto v = rho(quasi_periodic(), 4.0);
  EXPECT_NEAR(v.estimate, oracle, 0.03);
  EXPECT_LE(v.lower, oracle + 1e-3);
  EXPECT_GE(v.upper, oracle - 1e-3);
}

TEST(Rho, TableMonotoneAndBounded) {
  RhoSearch s;
  s.domain_radius = 20.0;
  const auto f = quasi_periodic();
  const auto t = rho_table(f, {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}, s);
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    EXPECT_GE(t.values[k], 0.0);
    EXPECT_LE(t.values[k], 2.0 * 3.0);
    if (k) {
      EXPECT_LE(t.values[k], t.values[k - 1]);
    }
  }
  EXPECT_THROW(rho_table(f, {2.0, 1.0}), ValidationError);
  EXPECT_THROW(rho_table(f, {}), ValidationError);
}

TEST(Rho, TranslationInvariantWithinSlack) {
  RhoSearch s;
  s.domain_radius = 20.0;
  const auto f = quasi_periodic();
  const std::vector<double> shift{3.3};
  const auto a = rho(f, 4.0, s);
  const auto b = rho(f.translated(shift), 4.0, s);
  EXPECT_NEAR(a.estimate, b.estimate, 0.1);
}

TEST(DecayFit, SyntheticExactModel) {
  const auto t = rho_table_from_model({4, 16, 256, 65536}, [](double r) { return 2.0 * std::pow(std::log(r), -4.0); });
  const auto fit = decay_fit(t);
  EXPECT_EQ(fit.status, DecayStatus::ok);
  EXPECT_NEAR(fit.c0, 2.0, 1e-10);
  EXPECT_NEAR(fit.n, 4.0, 1e-10);
  EXPECT_LT(fit.residual, 1e-10);
}

TEST(DecayFit, PeriodicTableIsCompactlySupported) {
  const auto t = rho_table(one_d(), {1.0, 4.0, 8.0, 16.0, 32.0});
  EXPECT_EQ(decay_fit(t).status, DecayStatus::compact_support);
}

TEST(DecayFit, FlatTableIsDegenerate) {
  const auto t = rho_table_from_model({4, 8, 16, 32}, [](double) { return 0.5; });
  const auto fit = decay_fit(t);
  EXPECT_EQ(fit.status, DecayStatus::degenerate);
  EXPECT_TRUE(std::isnan(fit.n));
}

TEST(DecayFit, TooFewEntries) {
  const auto t = rho_table_from_model({4, 8}, [](double r) { return 1.0 / r; });
  EXPECT_EQ(decay_fit(t).status, DecayStatus::insufficient);
}

TEST(Periodized, RoundsFrequenciesToBoxLattice) {
  const auto [pf, err] = quasi_periodic().periodized(100.0);
  const double q = 2 * kPi / 100.0;
  for (const auto& m : pf.modes()) EXPECT_NEAR(std::remainder(m.freq[0], q), 0.0, 1e-12);
  EXPECT_LE(err, q / 2 + 1e-15);
  EXPECT_GT(err, 0.0);
}
