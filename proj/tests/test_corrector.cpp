#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "homoglab/corrector.hpp"
#include "homoglab/homogenize.hpp"

using namespace homoglab;

namespace {

constexpr double kPi = std::numbers::pi;

TensorField sine_1d() { return scalar_sine_field(1, 2.0, {{1.0, 1.0}}, 1.0 / 3.0, 0, std::vector<double>{2 * kPi}); }

TensorField laminate() {
  return scalar_sine_field(2, 2.0, {{1.0, 1.0}}, 1.0 / 3.0, 0, std::vector<double>{2 * kPi, 2 * kPi});
}

TensorField quasi_periodic() { return scalar_sine_field(1, 2.0, {{0.5, 1.0}, {0.5, std::sqrt(2.0)}}, 1.0 / 3.0); }

// Fine 1D solves cannot reach 1e-10 relative residual in double precision.
CorrectorOptions fine_1d() { return {1e-8, 0, false}; }

}  // namespace

TEST(SolveCorrector, ConstantFieldGivesZero) {
  const auto f = TensorField::constant(2, 1, 2.0, 0.5);
  const auto cs = solve_corrector(f, 4.0, 0.0, 16);
  for (const auto& c : cs.chi) EXPECT_LE(lp_norm(c, INFINITY), 1e-10);
  const auto b = corrector_bounds(cs, 0.5);
  EXPECT_LE(b.sup_over_T, 1e-10);
  EXPECT_LE(b.lipschitz, 1e-10);
  EXPECT_LE(b.energy, 1e-20);
  EXPECT_LE(b.holder_ratio, 1e-10);
}

TEST(SolveCorrector, RejectsSmallT) { EXPECT_THROW(solve_corrector(sine_1d(), 0.5, 0.0, 16), ValidationError); }

// At T = infinity a(1 + chi') = <1/a>^-1 = sqrt(3), so chi'(pi/2) = sqrt(3)/3 - 1.
TEST(SolveCorrector, OneDimensionalGradientMatchesClosedForm) {
  const int n = 2048;
  const auto cs = solve_corrector(sine_1d(), 1000.0, 0.0, n, fine_1d());
  const std::size_t node = n / 4;  // y = pi/2
  EXPECT_NEAR(cs.box.coord(node, 0), kPi / 2, 1e-14);
  EXPECT_NEAR(cs.grad_column(0, 0).at(node, 0), std::sqrt(3.0) / 3.0 - 1.0, 1e-3);
  double worst = 0.0;
  for (std::size_t k = 0; k < cs.box.node_count(); ++k) {
    const double y = cs.box.coord(k, 0);
    worst = std::max(worst, std::abs(cs.grad_column(0, 0).at(k, 0) - (std::sqrt(3.0) / (2.0 + std::sin(y)) - 1.0)));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(SolveCorrector, LaminateReducesToOneDimensionalProfile) {
  const int n = 64;
  const auto cs2 = solve_corrector(laminate(), 1000.0, 0.0, n);
  const auto cs1 = solve_corrector(sine_1d(), 1000.0, 0.0, n);
  EXPECT_LE(lp_norm(cs2.column(1, 0), INFINITY), 1e-10);
  double worst = 0.0;
  for (std::size_t k = 0; k < cs2.box.node_count(); ++k) {
    const auto i = static_cast<std::size_t>(cs2.box.coord_index(k, 0));
    worst = std::max(worst, std::abs(cs2.column(0, 0).at(k, 0) - cs1.column(0, 0).at(i, 0)));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(SolveCorrector, MeanZeroAndResiduals) {
  const auto cs = solve_corrector(laminate(), 16.0, 0.0, 32);
  for (const auto& c : cs.chi) {
    const double sup = lp_norm(c, INFINITY);
    EXPECT_LE(std::abs(mean(c)[0]), 1e-12 * std::max(sup, 1.0));
  }
  for (double r : cs.residuals) EXPECT_LE(r, kDefaultTol);
}

TEST(SolveCorrector, WeakFormAgainstRandomTestFunctions) {
  CoefTensor mean = CoefTensor::isotropic(2, 1, 2.0);
  mean(0, 1, 0, 0) = mean(1, 0, 0, 0) = 0.3;
  Mode md;
  md.freq = {1.0, 1.0};
  md.cos_amp = CoefTensor::isotropic(2, 1, 0.5);
  md.sin_amp = CoefTensor(2, 1);
  const TensorField f(mean, {md}, 0.3, std::vector<double>{2 * kPi, 2 * kPi});
  const double T = 8.0;
  const auto cs = solve_corrector(f, T, 0.0, 24);
  const auto mass = lumped_mass(cs.box, 1);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  for (int j = 0; j < 2; ++j) {
    const auto b = constant_gradient_rhs(f, cs.box, 1.0, j, 0);
    const auto& chi = cs.column(j, 0).values;
    for (int s = 0; s < 20; ++s) {
      std::vector<double> v(chi.size());
      for (double& x : v) x = nd(rng);
      double lhs = bilinear_form(f, cs.box, 1.0, v, chi);
      double rhs = 0.0, vn = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) {
        lhs += mass(static_cast<Eigen::Index>(k)) * v[k] * chi[k] / (T * T);
        rhs += v[k] * b(static_cast<Eigen::Index>(k));
        vn += v[k] * v[k];
      }
      EXPECT_LE(std::abs(lhs - rhs), 1e-8 * std::sqrt(vn) * b.norm());
    }
  }
}

TEST(CorrectorBounds, EnergyBoundHolds) {
  for (const auto& f : {sine_1d(), laminate()}) {
    const auto cs = solve_corrector(f, 8.0, 0.0, f.dim() == 1 ? 256 : 32);
    const auto b = corrector_bounds(cs, 0.5, 1);
    EXPECT_LE(b.energy, b.energy_bound + 1e-8);
    EXPECT_NEAR(b.energy_bound, 9.0 * 9.0, 1e-12);  // ||A|| = 3, mu = 1/3
  }
}

// chi_T converges to the bounded cell corrector, so T^-1 ||chi_T|| falls like 1/T.
TEST(CorrectorBounds, PeriodicSupOverTDecaysLikeInverseT) {
  std::vector<double> sup;
  for (double T : {8.0, 32.0, 128.0}) sup.push_back(corrector_bounds(solve_corrector(sine_1d(), T, 0.0, 256), 0.5).sup_over_T);
  EXPECT_NEAR(sup[0] / sup[1], 4.0, 0.4);
  EXPECT_NEAR(sup[1] / sup[2], 4.0, 0.1);
}

TEST(CorrectorBounds, QuasiPeriodicLipschitzUniformInT) {
  std::vector<double> lip;
  for (double T : {8.0, 32.0}) {
    const auto cs = solve_corrector(quasi_periodic(), T, 0.0, 1024, fine_1d());
    lip.push_back(corrector_bounds(cs, 0.5).lipschitz);
  }
  EXPECT_LE(std::max(lip[0], lip[1]), 2.0 * std::min(lip[0], lip[1]));
}

TEST(CorrectorBounds, RejectsSigmaOutsideUnitInterval) {
  const auto cs = solve_corrector(sine_1d(), 4.0, 0.0, 32);
  EXPECT_THROW(corrector_bounds(cs, 0.0), ValidationError);
  EXPECT_THROW(corrector_bounds(cs, 1.0), ValidationError);
}

TEST(DefaultBox, CoversTAndLowestFrequency) {
  const auto f = quasi_periodic();
  EXPECT_NEAR(default_box_side(f, 100.0), 2 * kPi * 100.0, 1e-9);
  EXPECT_NEAR(default_box_side(f, 2.0), 64.0 * 2 * kPi, 1e-9);
}

TEST(SolveCorrector, WarnsWhenBoxBelowTwoPiT) {
  const auto cs = solve_corrector(quasi_periodic(), 100.0, 200.0, 512, fine_1d());
  EXPECT_FALSE(cs.warnings.empty());
  EXPECT_GT(cs.periodization_error, 0.0);
}

TEST(PsiDistance, SelfAndConstant) {
  const auto cs = solve_corrector(sine_1d(), 16.0, 0.0, 128);
  EXPECT_EQ(psi_distance(cs, cs), 0.0);
  const auto c = TensorField::constant(1, 1, 2.0, 0.5);
  const auto a = solve_corrector(c, 4.0, 0.0, 64);
  const auto b = solve_corrector(c, 64.0, 0.0, 64);
  EXPECT_LE(psi_distance(a, b), 1e-12);
}

TEST(PsiDistance, DecreasesTowardExactCorrector) {
  const auto ref = solve_cell_corrector(sine_1d(), 256);
  const double d32 = psi_distance(solve_corrector(sine_1d(), 32.0, 0.0, 256), ref);
  const double d128 = psi_distance(solve_corrector(sine_1d(), 128.0, 0.0, 256), ref);
  EXPECT_GT(d32, 0.0);
  EXPECT_LT(d128, d32);
}

TEST(PsiDistance, RejectsMismatchedInputs) {
  const auto a = solve_corrector(sine_1d(), 8.0, 0.0, 64);
  const auto b = solve_corrector(sine_1d(), 16.0, 0.0, 64);
  const auto c = solve_corrector(sine_1d(), 64.0, 0.0, 128);
  EXPECT_THROW(psi_distance(a, b), ValidationError);  // reference T too small
  EXPECT_THROW(psi_distance(a, c), ValidationError);  // different grids
}

TEST(Serialization, RoundTrip) {
  const auto f = laminate();
  const auto cs = solve_corrector(f, 8.0, 0.0, 16);
  const auto dir = std::filesystem::temp_directory_path() / "homoglab_test_corrector_rt";
  std::filesystem::remove_all(dir);
  save_corrector_set(cs, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  const auto back = load_corrector_set(dir, f);
  EXPECT_EQ(back.T, cs.T);
  EXPECT_TRUE(back.box.same_layout(cs.box));
  ASSERT_EQ(back.chi.size(), cs.chi.size());
  for (std::size_t c = 0; c < cs.chi.size(); ++c) {
    EXPECT_EQ(back.chi[c].values, cs.chi[c].values);
    EXPECT_EQ(back.grad_chi[c].values, cs.grad_chi[c].values);
  }
  EXPECT_EQ(back.residuals, cs.residuals);
  EXPECT_THROW(load_corrector_set(dir / "missing", f), ValidationError);
  std::filesystem::remove_all(dir);
}
