#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "engage/platt.hpp"
#include "engage/svm.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace engage {
namespace {

using testing::BinaryProblem;

TEST(SvmSolver, BatteryMatchesExhaustiveQp) {
  for (const auto& p : testing::svm_problem_battery()) {
    SCOPED_TRACE(p.name);
    const auto s = solve_binary_svm(p.x, p.y, p.kernel, p.gamma, p.C);
    const auto best = oracle::svm_dual_exhaustive(testing::gram_matrix(p), p.y, p.C);
    EXPECT_NEAR(s.dual_objective, best.objective, 1e-3);
    EXPECT_NEAR(dual_objective(p.x, p.y, p.kernel, p.gamma, s.alpha), s.dual_objective, 1e-12);
    EXPECT_LE(kkt_residual(p.x, p.y, p.kernel, p.gamma, p.C, s), 1e-3);
    EXPECT_LE(testing::kkt_violation(p, s), 1e-3);
    double eq = 0.0;
    for (std::size_t i = 0; i < s.alpha.size(); ++i) {
      EXPECT_GE(s.alpha[i], 0.0);
      EXPECT_LE(s.alpha[i], p.C);
      eq += p.y[i] * s.alpha[i];
    }
    EXPECT_NEAR(eq, 0.0, 1e-9);
  }
}

TEST(SvmSolver, SeparableHasNoTrainingErrors) {
  const auto p = testing::svm_problem_battery()[0];
  const auto s = solve_binary_svm(p.x, p.y, p.kernel, p.gamma, p.C);
  const auto machine = to_decision_function(p.x, p.y, p.kernel, p.gamma, s);
  for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
    EXPECT_GT(p.y[static_cast<std::size_t>(i)] * machine.decision(row_span(p.x, i)), 0.0);
  }
}

TEST(SvmSolver, XorClassifiedAndFrozenObjective) {
  const auto p = testing::svm_problem_battery()[1];
  ASSERT_EQ(p.name, "xor");
  const auto s = solve_binary_svm(p.x, p.y, p.kernel, p.gamma, p.C);
  const auto machine = to_decision_function(p.x, p.y, p.kernel, p.gamma, s);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_GT(p.y[static_cast<std::size_t>(i)] * machine.decision(row_span(p.x, i)), 0.0);
  }
  // By symmetry all four duals are equal, alpha = 1 / (1 - 2/e + 1/e^2), objective = 2 alpha.
  const double e1 = std::exp(-1.0), e2 = std::exp(-2.0);
  const double alpha = 1.0 / (1.0 - 2.0 * e1 + e2);
  EXPECT_NEAR(oracle::svm_dual_exhaustive(testing::gram_matrix(p), p.y, p.C).objective, 2.0 * alpha, 1e-9);
  EXPECT_NEAR(s.dual_objective, 2.0 * alpha, 1e-3);
}

TEST(SvmSolver, ContradictoryDuplicatesDoNotFail) {
  const auto p = testing::svm_problem_battery()[2];
  ASSERT_EQ(p.name, "contradictory");
  BinarySvmSolution s;
  ASSERT_NO_THROW(s = solve_binary_svm(p.x, p.y, p.kernel, p.gamma, p.C));
  EXPECT_LE(kkt_residual(p.x, p.y, p.kernel, p.gamma, p.C, s), 1e-3);
}

TEST(SvmSolver, InputValidation) {
  Matrix x(2, 1);
  x << 0, 1;
  const std::vector<int> bad{1, 0};
  EXPECT_THROW(solve_binary_svm(x, bad, Kernel::linear, 0.0, 1.0), Error);
  const std::vector<int> good{1, -1};
  EXPECT_THROW(solve_binary_svm(x, good, Kernel::linear, 0.0, 0.0), Error);
}

TEST(Platt, SymmetricValuesGiveZeroBias) {
  const std::vector<double> f{-2, -1, 1, 2};
  const std::vector<int> y{0, 0, 1, 1};
  const auto params = platt_calibrate(f, y);
  EXPECT_NEAR(params.b, 0.0, 1e-2);
  EXPECT_LT(params.a, 0.0);
  const auto [a, b] = oracle::platt_gradient_descent(f, y);
  EXPECT_NEAR(params.a, a, 1e-3);
  EXPECT_NEAR(params.b, b, 1e-3);
}

TEST(Platt, MatchesIndependentMinimizerOnRandomData) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> f;
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
      const int label = i % 3 == 0 ? 1 : 0;
      y.push_back(label);
      f.push_back(n(rng) + (label ? 1.0 : -0.5));
    }
    const auto params = platt_calibrate(f, y);
    const auto [a, b] = oracle::platt_gradient_descent(f, y);
    const double ours = oracle::platt_negative_log_likelihood(params.a, params.b, f, y);
    const double theirs = oracle::platt_negative_log_likelihood(a, b, f, y);
    EXPECT_LE(ours, theirs + 1e-8);
    EXPECT_NEAR(params.a, a, 1e-3);
    EXPECT_NEAR(params.b, b, 1e-3);
    EXPECT_NEAR(platt_objective(params, f, y), ours, 1e-9);
  }
}

TEST(Platt, OpenIntervalAndMonotone) {
  const std::vector<double> f{-50, -3, -1, 1, 3, 50};
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const auto params = platt_calibrate(f, y);
  EXPECT_LT(params.a, 0.0);
  double previous = 0.0;
  for (double v = -1000.0; v <= 1000.0; v += 0.5) {
    const double p = params.probability(v);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    EXPECT_GE(p, previous);
    previous = p;
  }
}

TEST(Platt, OneSidedLabelsRejected) {
  const std::vector<double> f{1, 2, 3};
  const std::vector<int> y{1, 1, 1};
  try {
    platt_calibrate(f, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
}

TEST(SvmMulticlass, DistributionsValidAndAccurate) {
  std::mt19937_64 rng(32);
  Matrix x;
  std::vector<EngagementLevel> y;
  testing::gaussian_blobs(rng, 20, 3, 0.5, x, y);
  for (Kernel kernel : {Kernel::linear, Kernel::rbf}) {
    SvmParams params;
    params.kernel = kernel;
    const auto model = fit_svm(x, y, params, 7);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto d = svm_predict(model, row_span(x, i));
      EXPECT_TRUE(d.is_valid());
      correct += d.argmax() == y[static_cast<std::size_t>(i)];
    }
    EXPECT_GE(correct, 57u);
    for (bool c : model.calibrated) EXPECT_TRUE(c);
  }
}

TEST(SvmMulticlass, NormalizesRawPlattOutputs) {
  // Hand-built machines with constant decision values and calibrations that
  // yield raw probabilities (0.2, 0.6, 0.2).
  SvmModel model;
  model.dimension = 1;
  const double raw[] = {0.2, 0.6, 0.2};
  for (std::size_t l = 0; l < 3; ++l) {
    model.machines[l].kernel = Kernel::linear;
    model.machines[l].support_vectors = Matrix::Zero(1, 1);
    model.machines[l].coefficients = {0.0};
    model.machines[l].bias = 0.0;
    model.calibration[l] = {-1.0, std::log(1.0 / raw[l] - 1.0)};
  }
  const std::vector<double> x{0.3};
  const auto p = svm_raw_probabilities(model, x);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(p[l], raw[l], 1e-12);
  const auto d = svm_predict(model, x);
  EXPECT_NEAR(d.p[0], 0.2, 1e-12);
  EXPECT_NEAR(d.p[1], 0.6, 1e-12);
  EXPECT_NEAR(d.p[2], 0.2, 1e-12);
}

TEST(SvmMulticlass, AbsentLevelUnsupported) {
  Matrix x(4, 1);
  x << 0, 1, 2, 3;
  const std::vector<EngagementLevel> y{EngagementLevel::low, EngagementLevel::low, EngagementLevel::high,
                                       EngagementLevel::high};
  try {
    fit_svm(x, y, SvmParams{}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported);
  }
}

TEST(SvmMulticlass, SingletonLevelSkipsCalibration) {
  Matrix x(7, 1);
  x << 0, 0.1, 0.2, 5, 5.1, 5.2, 10;
  const std::vector<EngagementLevel> y{EngagementLevel::low,    EngagementLevel::low,    EngagementLevel::low,
                                       EngagementLevel::medium, EngagementLevel::medium, EngagementLevel::medium,
                                       EngagementLevel::high};
  const auto model = fit_svm(x, y, SvmParams{}, 0);
  EXPECT_TRUE(model.calibrated[0]);
  EXPECT_FALSE(model.calibrated[2]);
  const std::vector<double> probe{9.0};
  EXPECT_TRUE(svm_predict(model, probe).is_valid());
}

TEST(SvmMulticlass, DeterministicAndSerializable) {
  std::mt19937_64 rng(33);
  Matrix x;
  std::vector<EngagementLevel> y;
  testing::gaussian_blobs(rng, 10, 2, 1.0, x, y);
  const auto a = fit_svm(x, y, SvmParams{}, 3);
  const auto b = fit_svm(x, y, SvmParams{}, 3);
  const auto c = svm_from_json(nlohmann::json::parse(svm_to_json(a).dump()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    EXPECT_EQ(svm_predict(a, row_span(x, i)).p, svm_predict(b, row_span(x, i)).p);
    EXPECT_EQ(svm_predict(a, row_span(x, i)).p, svm_predict(c, row_span(x, i)).p);
  }
  const std::vector<double> wrong{1, 2, 3};
  EXPECT_THROW(svm_predict(a, wrong), Error);
}

TEST(SvmMulticlass, DefaultGammaIsInverseDimTimesVariance) {
  Matrix x(4, 2);
  x << 0, 0, 2, 0, 0, 4, 2, 4;
  // Column variances (population) 1 and 4, mean 2.5; gamma = 1 / (2 * 2.5).
  EXPECT_NEAR(default_gamma(x), 0.2, 1e-12);
}

}  // namespace
}  // namespace engage
