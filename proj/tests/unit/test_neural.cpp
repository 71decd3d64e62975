#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "engage/lstm.hpp"
#include "engage/mlp.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace engage {
namespace {

TEST(MlpGradient, MatchesFiniteDifferencesAtInitialization) {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> n;
  Matrix x(5, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  const std::vector<EngagementLevel> y{EngagementLevel::low, EngagementLevel::high, EngagementLevel::medium,
                                       EngagementLevel::high, EngagementLevel::low};
  const MlpWeights w = init_mlp(3, 7, 4);
  Vector analytic;
  mlp_loss_and_gradient(w, x, y, analytic);
  const auto numeric = oracle::central_difference(
      [&](const Eigen::VectorXd& flat) {
        MlpWeights probe = w;
        probe.assign(flat);
        return mlp_loss(probe, x, y);
      },
      w.flatten(), 1e-5);
  EXPECT_LT((analytic - numeric).norm() / std::max(analytic.norm(), numeric.norm()), 1e-4);
}

TEST(MlpGradient, MatchesFiniteDifferencesAtRandomPoints) {
  for (std::uint64_t point = 0; point < 20; ++point) EXPECT_LT(testing::mlp_gradient_error(point), 1e-4) << point;
}

TEST(LstmGradient, MatchesFiniteDifferencesAtRandomPoints) {
  for (std::uint64_t point = 0; point < 20; ++point) EXPECT_LT(testing::lstm_gradient_error(point), 1e-4) << point;
}

TEST(Mlp, FlattenAssignRoundTrip) {
  MlpWeights w = init_mlp(4, 5, 1);
  EXPECT_EQ(w.parameter_count(), 4u * 5 + 5 + 5 * 3 + 3);
  const Vector flat = w.flatten();
  MlpWeights other = init_mlp(4, 5, 2);
  other.assign(flat);
  EXPECT_EQ(other.flatten(), flat);
  EXPECT_EQ(other.w1, w.w1);
  EXPECT_EQ(other.b2, w.b2);
}

TEST(Mlp, FullBatchStepDecreasesLoss) {
  Matrix x(6, 2);
  x << -2, -1, -1.5, -2, 0, 0.2, 0.1, -0.2, 2, 1, 1.5, 2;
  const std::vector<EngagementLevel> y{EngagementLevel::low,    EngagementLevel::low,  EngagementLevel::medium,
                                       EngagementLevel::medium, EngagementLevel::high, EngagementLevel::high};
  MlpWeights w = init_mlp(2, 8, 3);
  Vector gradient;
  const double before = mlp_loss_and_gradient(w, x, y, gradient);
  w.assign(w.flatten() - 1e-3 * gradient);
  EXPECT_LT(mlp_loss(w, x, y), before);
}

TEST(Mlp, ZeroWeightsGiveUniform) {
  MlpModel model;
  model.weights = init_mlp(3, 4, 0);
  model.weights.assign(Vector::Zero(static_cast<Eigen::Index>(model.weights.parameter_count())));
  const std::vector<double> x{0.3, -2.0, 5.0};
  const auto d = mlp_predict(model, x);
  for (double p : d.p) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(EarlyStopping, ScriptedTrace) {
  EarlyStopping stopper(3);
  EXPECT_TRUE(stopper.update(1.0));
  EXPECT_TRUE(stopper.update(0.8));
  EXPECT_FALSE(stopper.should_stop());
  EXPECT_FALSE(stopper.update(0.9));
  EXPECT_FALSE(stopper.update(0.85));
  EXPECT_FALSE(stopper.should_stop());
  EXPECT_FALSE(stopper.update(0.8));  // equal is not an improvement
  EXPECT_TRUE(stopper.should_stop());
  EXPECT_EQ(stopper.best_epoch(), 1u);
  EXPECT_EQ(stopper.best_loss(), 0.8);
}

TEST(Mlp, FitRestoresBestWeights) {
  std::mt19937_64 rng(52);
  Matrix x;
  std::vector<EngagementLevel> y;
  testing::gaussian_blobs(rng, 30, 4, 1.5, x, y);
  MlpParams params;
  params.hidden = 16;
  params.learning_rate = 0.5;  // large enough for validation loss to wobble
  params.batch_size = 8;
  params.patience = 2;
  params.max_epochs = 200;
  TrainingReport report;
  const auto model = fit_mlp(x, y, params, 9, &report);
  ASSERT_TRUE(report.stopped_early);
  EXPECT_EQ(report.epochs_run, report.best_epoch + 1 + params.patience);
  EXPECT_EQ(report.validation_curve.size(), report.epochs_run);
  for (double v : report.validation_curve) EXPECT_GE(v, report.validation_curve[report.best_epoch]);

  // Training is deterministic, so stopping right after the best epoch
  // reproduces the restored weights exactly.
  MlpParams truncated = params;
  truncated.max_epochs = report.best_epoch + 1;
  truncated.patience = 1000;
  const auto reference = fit_mlp(x, y, truncated, 9);
  EXPECT_EQ(model.weights.flatten(), reference.weights.flatten());
}

TEST(Mlp, DivergenceNamesEpoch) {
  std::mt19937_64 rng(53);
  Matrix x;
  std::vector<EngagementLevel> y;
  testing::gaussian_blobs(rng, 10, 3, 1.0, x, y);
  x *= 1e150;
  MlpParams params;
  params.hidden = 8;
  params.learning_rate = 1e150;
  try {
    fit_mlp(x, y, params, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::divergence);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Mlp, TooFewSamplesAndWrongDimension) {
  Matrix x = Matrix::Zero(9, 2);
  const std::vector<EngagementLevel> y(9, EngagementLevel::low);
  EXPECT_THROW(fit_mlp(x, y, MlpParams{}, 0), Error);
  MlpModel model;
  model.weights = init_mlp(3, 4, 0);
  const std::vector<double> wrong{1.0};
  EXPECT_THROW(mlp_predict(model, wrong), Error);
}

TEST(Mlp, DeterministicReportAndSerialization) {
  std::mt19937_64 rng(54);
  Matrix x;
  std::vector<EngagementLevel> y;
  testing::gaussian_blobs(rng, 10, 3, 1.0, x, y);
  MlpParams params;
  params.hidden = 8;
  params.max_epochs = 15;
  TrainingReport a, b;
  const auto ma = fit_mlp(x, y, params, 5, &a);
  const auto mb = fit_mlp(x, y, params, 5, &b);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(a.validation_curve, b.validation_curve);
  EXPECT_EQ(a.seed, 5u);
  const auto back = mlp_from_json(nlohmann::json::parse(mlp_to_json(ma).dump()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    EXPECT_EQ(mlp_predict(back, row_span(x, i)).p, mlp_predict(mb, row_span(x, i)).p);
  }
}

std::vector<Matrix> toy_sequences(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                  std::vector<EngagementLevel>& y, std::size_t frames = kSequenceLength) {
  std::normal_distribution<double> g;
  std::vector<Matrix> out;
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const auto level = level_from_index(i % 3);
    Matrix m(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = g(rng) * 0.3 + (static_cast<std::size_t>(c) == index_of(level) ? 1.5 : 0.0);
    out.push_back(std::move(m));
    y.push_back(level);
  }
  return out;
}

TEST(Lstm, FlattenAssignRoundTrip) {
  LstmParams params;
  params.hidden = 3;
  params.dense = 2;
  LstmWeights w = init_lstm(2, params, 1);
  // Layer 1: 4h x (d + h) + 4h, layer 2: 4h x 2h + 4h, dense and output heads.
  EXPECT_EQ(w.parameter_count(), 12u * 5 + 12 + 12 * 6 + 12 + 2 * 3 + 2 + 3 * 2 + 3);
  const Vector flat = w.flatten();
  LstmWeights other = init_lstm(2, params, 2);
  other.assign(flat);
  EXPECT_EQ(other.flatten(), flat);
}

TEST(Lstm, WrongLengthIsShapeError) {
  std::mt19937_64 rng(55);
  std::vector<EngagementLevel> y;
  auto seqs = toy_sequences(rng, 4, 3, y, 23);
  LstmParams params;
  params.hidden = 4;
  params.dense = 4;
  try {
    fit_lstm(seqs, y, params, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  auto good = toy_sequences(rng, 4, 3, y);
  const auto model = fit_lstm(good, y, params, 0);
  try {
    lstm_predict(model, seqs.front());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(Lstm, DefaultsRunFiveEpochs) {
  const LstmParams defaults;
  EXPECT_EQ(defaults.epochs, 5u);
  EXPECT_EQ(defaults.hidden, 128u);
  EXPECT_EQ(defaults.layers, 2u);
  EXPECT_EQ(defaults.dense, 64u);
  EXPECT_EQ(defaults.learning_rate, 1e-3);
  std::mt19937_64 rng(56);
  std::vector<EngagementLevel> y;
  const auto seqs = toy_sequences(rng, 6, 3, y);
  TrainingReport report;
  const auto model = fit_lstm(seqs, y, defaults, 3, &report);
  EXPECT_EQ(report.epochs_run, 5u);
  EXPECT_EQ(report.loss_curve.size(), 5u);
  EXPECT_TRUE(lstm_predict(model, seqs[0]).is_valid());
}

TEST(Lstm, LearnsToySequencesDeterministically) {
  std::mt19937_64 rng(57);
  std::vector<EngagementLevel> y;
  const auto seqs = toy_sequences(rng, 60, 3, y);
  LstmParams params;
  params.hidden = 8;
  params.dense = 8;
  params.learning_rate = 0.02;
  params.epochs = 15;
  params.batch_size = 10;
  TrainingReport a, b;
  const auto model = fit_lstm(seqs, y, params, 4, &a);
  fit_lstm(seqs, y, params, 4, &b);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_LT(a.loss_curve.back(), a.loss_curve.front());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) correct += lstm_predict(model, seqs[i]).argmax() == y[i];
  EXPECT_GE(correct, 54u);
  const auto back = lstm_from_json(nlohmann::json::parse(lstm_to_json(model).dump()));
  EXPECT_EQ(lstm_predict(back, seqs[1]).p, lstm_predict(model, seqs[1]).p);
}

}  // namespace
}  // namespace engage
