// The reference implementations are only useful if they are right; pin each
// one against a closed form.

#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace engage {
namespace {

TEST(Oracle, JacobiTwoByTwo) {
  Eigen::MatrixXd m(2, 2);
  m << 2, 1, 1, 2;
  const auto e = oracle::jacobi_eigen(m);
  EXPECT_NEAR(e.values[0], 3.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
  EXPECT_NEAR(std::abs(e.vectors[0][0]), std::sqrt(0.5), 1e-14);
  EXPECT_NEAR(e.vectors[0][0] * e.vectors[0][1], 0.5, 1e-14);
}

TEST(Oracle, ExhaustiveQpTwoPoints) {
  // x = +1, -1 with a linear kernel: alpha1 = alpha2 = a maximizes 2a - 2a^2.
  Eigen::MatrixXd g(2, 2);
  g << 1, -1, -1, 1;
  const std::vector<int> y{1, -1};
  auto best = oracle::svm_dual_exhaustive(g, y, 10.0);
  EXPECT_NEAR(best.objective, 0.5, 1e-12);
  EXPECT_NEAR(best.alpha[0], 0.5, 1e-12);
  best = oracle::svm_dual_exhaustive(g, y, 0.2);
  EXPECT_NEAR(best.objective, 0.4 - 2.0 * 0.04, 1e-12);
  EXPECT_NEAR(best.alpha[1], 0.2, 1e-12);
}

TEST(Oracle, PairCountingAuroc) {
  const std::vector<std::array<double, 3>> perfect{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
  const std::vector<int> actual{0, 1, 2, 0};
  EXPECT_DOUBLE_EQ(oracle::auroc_pair_count(perfect, actual), 1.0);
  const std::vector<std::array<double, 3>> flat(4, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_DOUBLE_EQ(oracle::auroc_pair_count(flat, actual), 0.5);
}

TEST(Oracle, CentralDifferenceOfQuadratic) {
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  const auto g = oracle::central_difference([](const Eigen::VectorXd& v) { return v.squaredNorm() + 3.0 * v[1]; }, x, 1e-3);
  EXPECT_NEAR(g[0], 2.0, 1e-9);
  EXPECT_NEAR(g[1], -1.0, 1e-9);
  EXPECT_NEAR(g[2], 1.0, 1e-9);
}

TEST(Oracle, IccClosedForms) {
  Eigen::MatrixXd same(4, 2);
  same << 0, 0, 1, 1, 2, 2, 3, 3;
  EXPECT_NEAR(oracle::icc_two_way_random_average(same), 1.0, 1e-12);
  Eigen::MatrixXd shifted(4, 2);
  shifted << 0, 0.5, 1, 1.5, 2, 2.5, 3, 3.5;
  // MSR = 10/3, MSC = 0.5, MSE = 0: (MSR - MSE) / (MSR + (MSC - MSE) / n).
  EXPECT_NEAR(oracle::icc_two_way_random_average(shifted), (10.0 / 3.0) / (10.0 / 3.0 + 0.5 / 4.0), 1e-12);
  EXPECT_NEAR((10.0 / 3.0) / (10.0 / 3.0 + 0.5 / 4.0), 80.0 / 83.0, 1e-15);
}

TEST(Oracle, VoteEnumeration) {
  std::vector<int> levels(24, 0);
  std::vector<std::array<double, 3>> p(24, {0.6, 0.2, 0.2});
  for (int i = 0; i < 12; ++i) {
    levels[static_cast<std::size_t>(i)] = 2;
    p[static_cast<std::size_t>(i)] = {0.1, 0.2, 0.7};
  }
  // 12 vs 12: low mass 12*0.6 + 12*0.1 = 8.4, high mass 12*0.7 + 12*0.2 = 10.8.
  EXPECT_EQ(oracle::vote_by_enumeration(levels, p), 2);
  for (auto& row : p) row = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  EXPECT_EQ(oracle::vote_by_enumeration(levels, p), 0);
  levels[0] = 1;
  EXPECT_EQ(oracle::vote_by_enumeration(levels, p), 0);
}

TEST(Oracle, PlattDescentIsStationary) {
  const std::vector<double> f{-2.0, -1.5, -0.3, 0.2, 0.4, 1.1, 2.5, -0.8};
  const std::vector<int> y{0, 0, 1, 0, 1, 1, 1, 0};
  const auto [a, b] = oracle::platt_gradient_descent(f, y);
  const double h = 1e-5;
  const double ga = (oracle::platt_negative_log_likelihood(a + h, b, f, y) -
                     oracle::platt_negative_log_likelihood(a - h, b, f, y)) / (2 * h);
  const double gb = (oracle::platt_negative_log_likelihood(a, b + h, f, y) -
                     oracle::platt_negative_log_likelihood(a, b - h, f, y)) / (2 * h);
  EXPECT_NEAR(ga, 0.0, 1e-6);
  EXPECT_NEAR(gb, 0.0, 1e-6);
  EXPECT_LT(a, 0.0);
}

}  // namespace
}  // namespace engage
