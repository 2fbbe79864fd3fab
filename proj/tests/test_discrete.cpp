#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "homoglab/krylov.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/operator.hpp"

using namespace homoglab;
constexpr double kPi = std::numbers::pi;

namespace {

Eigen::VectorXd to_vec(const GridFunction& f) { return Eigen::Map<const Eigen::VectorXd>(f.values.data(), static_cast<Eigen::Index>(f.values.size())); }

TensorField cross_field() {
  // Symmetric 2D field with off-diagonal entries.
  CoefTensor mean = CoefTensor::from_values(2, 1, {3.0, 0.5, 0.5, 2.5});
  CoefTensor c1 = CoefTensor::from_values(2, 1, {0.4, 0.2, 0.2, -0.3});
  CoefTensor s1 = CoefTensor::from_values(2, 1, {-0.2, 0.1, 0.1, 0.3});
  return TensorField(mean, {Mode{{1.0, 2.0}, c1, s1}}, 0.2, std::vector<double>{2 * kPi, 2 * kPi});
}

}  // namespace

TEST(Discrete, PeriodicSymbolOfLaplacian) {
  const double L = 1.0;
  const int n = 64;
  Grid g = Grid::periodic_box(1, L, n);
  auto op = assemble(TensorField::constant(1, 1, 1.0, 1.0), g, 1.0, 0.0, BoundaryKind::periodic);
  auto u = sample_scalar(g, [&](std::span<const double> x) { return std::cos(2 * kPi * x[0] / L); });
  const double h = g.h(0);
  const double symbol = 4.0 / (h * h) * std::pow(std::sin(kPi * h / L), 2);
  Eigen::VectorXd lu = op.apply(to_vec(u));
  for (std::size_t k = 0; k < g.node_count(); ++k) EXPECT_NEAR(lu(static_cast<Eigen::Index>(k)), symbol * u.values[k], 1e-12 * symbol);
}

TEST(Discrete, DirichletQuadraticExactness) {
  Grid g = Grid::rectangle({0.0, 0.0}, {1.0, 1.0}, 16);
  auto op = assemble(TensorField::constant(2, 1, 1.0, 1.0), g, 1.0, 0.0, BoundaryKind::dirichlet);
  auto u = sample_scalar(g, [](std::span<const double> x) { return x[0] * (1 - x[0]); });
  Eigen::VectorXd lu = op.apply(to_vec(u));
  for (std::size_t k = 0; k < g.node_count(); ++k)
    if (!g.on_boundary(k)) {
      EXPECT_NEAR(lu(static_cast<Eigen::Index>(k)), 2.0, 1e-10);
    }
}

TEST(Discrete, PeriodicRowSumsVanish) {
  Grid g = Grid::periodic_box(2, 2 * kPi, 24);
  auto op = assemble(cross_field(), g, 1.0, 0.0, BoundaryKind::periodic);
  for (Eigen::Index r = 0; r < op.stiffness.rows(); ++r) {
    double s = 0.0, a = 0.0;
    for (SparseMatrix::InnerIterator it(op.stiffness, r); it; ++it) {
      s += it.value();
      a += std::abs(it.value());
    }
    EXPECT_LE(std::abs(s), 1e-12 * a);
  }
}

TEST(Discrete, SymmetricFieldGivesSymmetricMatrix) {
  Grid g = Grid::periodic_box(2, 2 * kPi, 20);
  auto op = assemble(cross_field(), g, 1.0, 0.3, BoundaryKind::periodic);
  ASSERT_TRUE(op.symmetric);
  SparseMatrix t = op.stiffness.transpose();
  EXPECT_EQ((op.stiffness - t).norm(), 0.0);
}

TEST(Discrete, IntegrationByPartsMatchesForm) {
  Grid g = Grid::periodic_box(2, 2 * kPi, 20);
  const double c = 0.25;
  auto field = cross_field();
  auto op = assemble(field, g, 1.0, c, BoundaryKind::periodic);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(g.node_count())), v(u.size());
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      u(k) = nd(rng);
      v(k) = nd(rng);
    }
    // <v . op(u)> with box quadrature
    Eigen::VectorXd lu = op.apply(u);
    double lhs = 0.0, vu = 0.0;
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      lhs += op.mass(k) * v(k) * lu(k);
      vu += op.mass(k) * v(k) * u(k);
    }
    std::span<const double> us(u.data(), static_cast<std::size_t>(u.size()));
    std::span<const double> vs(v.data(), static_cast<std::size_t>(v.size()));
    const double rhs = bilinear_form(field, g, 1.0, vs, us) + c * vu;
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(rhs));
  }
}

TEST(Discrete, IdentitySolve) {
  Grid g = Grid::periodic_box(1, 1.0, 8);
  DiscreteOperator op;
  op.grid = g;
  op.stiffness.resize(8, 8);
  op.stiffness.setIdentity();
  op.mass = Eigen::VectorXd::Ones(8);
  op.fixed.assign(8, 0);
  Eigen::VectorXd b(8);
  b << 1, -2, 3, 0.5, 7, 0, -1, 2;
  auto u = krylov_solve(op, b);
  for (int k = 0; k < 8; ++k) EXPECT_NEAR(u.values[static_cast<std::size_t>(k)], b(k), 1e-12);
}

TEST(Discrete, PeriodicPoissonSymbolSolve) {
  const int n = 128;
  Grid g = Grid::periodic_box(1, 1.0, n);
  auto op = assemble(TensorField::constant(1, 1, 1.0, 1.0), g, 1.0, 0.0, BoundaryKind::periodic);
  auto rhs = sample_scalar(g, [](std::span<const double> x) { return std::cos(2 * kPi * x[0]); });
  const double h = g.h(0);
  const double symbol = 4.0 / (h * h) * std::pow(std::sin(kPi * h), 2);
  auto u = krylov_solve(op, to_vec(rhs), {1e-13, 0});
  for (std::size_t k = 0; k < g.node_count(); ++k) EXPECT_NEAR(u.values[k], rhs.values[k] / symbol, 1e-11);
}

TEST(Discrete, ZeroRhsGivesZero) {
  Grid g = Grid::periodic_box(2, 1.0, 8);
  auto op = assemble(TensorField::constant(2, 1, 1.0, 1.0), g, 1.0, 0.0, BoundaryKind::periodic);
  auto u = krylov_solve(op, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.node_count())));
  for (double v : u.values) EXPECT_EQ(v, 0.0);
}

TEST(Discrete, NonConvergenceRaisesWithResidual) {
  Grid g = Grid::periodic_box(1, 1.0, 256);
  auto op = assemble(TensorField::constant(1, 1, 1.0, 1.0), g, 1.0, 0.0, BoundaryKind::periodic);
  auto rhs = sample_scalar(g, [](std::span<const double> x) { return std::cos(2 * kPi * x[0]) + std::sin(6 * kPi * x[0]); });
  try {
    krylov_solve(op, to_vec(rhs), {1e-12, 3});
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.residual(), 1e-12);
    EXPECT_EQ(e.iterations(), 3u);
  }
}

TEST(Discrete, MeansNormsGradient) {
  Grid g = Grid::periodic_box(2, 1.0, 16);
  GridFunction c(g, 1);
  for (double& v : c.values) v = -2.5;
  EXPECT_DOUBLE_EQ(mean(c)[0], -2.5);
  EXPECT_DOUBLE_EQ(lp_norm(c, INFINITY), 2.5);
  auto s = sample_scalar(g, [](std::span<const double> x) { return std::sin(2 * kPi * x[0]); });
  EXPECT_LE(std::abs(mean(s)[0]), 1e-14);

  Grid r = Grid::rectangle({0.0}, {1.0}, 20);
  auto q = sample_scalar(r, [](std::span<const double> x) { return x[0] * x[0]; });
  auto gq = gradient(q);
  for (std::size_t k = 1; k + 1 < r.node_count(); ++k) EXPECT_NEAR(gq.values[k], 2 * r.coord(k, 0), 1e-13);
}

TEST(Discrete, BallOutsideBoxRejected) {
  Grid g = Grid::rectangle({0.0, 0.0}, {1.0, 1.0}, 16);
  GridFunction f(g, 1);
  std::vector<double> c{0.1, 0.5};
  EXPECT_THROW(l2_avg_ball(f, c, 0.2), ValidationError);
  std::vector<double> c2{0.5, 0.5};
  EXPECT_NO_THROW(l2_avg_ball(f, c2, 0.2));
}

TEST(Discrete, ResolutionRuleEnforced) {
  Grid g = Grid::periodic_box(1, 8 * kPi, 16);
  auto f = scalar_sine_field(1, 2.0, {{1.0, 1.0}}, 1.0 / 3.0);
  EXPECT_THROW(assemble(f, g, 1.0, 0.0, BoundaryKind::periodic), ValidationError);
  EXPECT_NO_THROW(assemble(f, g, 1.0, 0.0, BoundaryKind::periodic, {true}));
  Grid g2 = Grid::periodic_box(1, 2 * kPi, 64);
  EXPECT_NO_THROW(assemble(f, g2, 1.0, 0.0, BoundaryKind::periodic));
}

TEST(Discrete, DirichletPoissonSecondOrder) {
  auto err = [](int n) {
    Grid g = Grid::rectangle({0.0, 0.0}, {1.0, 1.0}, n);
    auto op = assemble(TensorField::constant(2, 1, 1.0, 1.0), g, 1.0, 0.0, BoundaryKind::dirichlet);
    auto exact = sample_scalar(g, [](std::span<const double> x) { return std::sin(kPi * x[0]) * std::sin(kPi * x[1]); });
    Eigen::VectorXd rhs = 2 * kPi * kPi * to_vec(exact);
    for (std::size_t k = 0; k < g.node_count(); ++k)
      if (g.on_boundary(k)) rhs(static_cast<Eigen::Index>(k)) = 0.0;
    auto u = krylov_solve(op, rhs, {1e-12, 0});
    return lp_norm(u - exact, 2.0);
  };
  const double e1 = err(16), e2 = err(32), e3 = err(64);
  EXPECT_NEAR(e1 / e2, 4.0, 0.8);
  EXPECT_NEAR(e2 / e3, 4.0, 0.8);
}

TEST(Discrete, Determinism) {
  Grid g = Grid::periodic_box(2, 2 * kPi, 32);
  auto op = assemble(cross_field(), g, 1.0, 0.1, BoundaryKind::periodic);
  auto rhs = sample_scalar(g, [](std::span<const double> x) { return std::sin(x[0]) * std::cos(2 * x[1]); });
  auto a = krylov_solve(op, to_vec(rhs));
  auto b = krylov_solve(op, to_vec(rhs));
  EXPECT_EQ(a.values, b.values);
}

TEST(Discrete, Hgf1RoundTrip) {
  Grid g = Grid::rectangle({0.0, 1.0}, {2.0, 1.0}, 5);
  auto f = sample(g, 2, [](std::span<const double> x, std::span<double> o) {
    o[0] = x[0] + 0.1;
    o[1] = x[1] * x[0];
  });
  std::stringstream ss;
  write_hgf1(ss, f);
  auto data = read_hgf1(ss);
  auto back = to_grid_function(data, g);
  EXPECT_EQ(back.values, f.values);
  EXPECT_EQ(back.components, 2);
}
