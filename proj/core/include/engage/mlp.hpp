#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/types.hpp"

namespace engage {

struct MlpParams {
  std::size_t hidden = 128;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  double validation_fraction = 0.1;
  std::size_t patience = 5;
  std::size_t max_epochs = 200;
};

/// d -> hidden (ReLU) -> 3 logits.
struct MlpWeights {
  Matrix w1;  // hidden x d
  Vector b1;
  Matrix w2;  // 3 x hidden
  Vector b2;

  std::size_t parameter_count() const;
  Vector flatten() const;
  void assign(const Vector& flat);
};

struct TrainingReport {
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 0-based index into validation_curve
  bool stopped_early = false;
  std::vector<double> loss_curve;
  std::vector<double> validation_curve;
};

/// Tracks validation loss; stop() turns true after `patience` epochs without
/// strict improvement over the best loss seen.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records one epoch; returns true when that epoch is the new best.
  bool update(double validation_loss);
  bool should_stop() const { return epochs_since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t epochs_since_best_ = 0;
  double best_loss_ = 0.0;
  bool has_best_ = false;
};

MlpWeights init_mlp(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

/// Mean softmax cross-entropy over the rows of `x`.
double mlp_loss(const MlpWeights& w, const Matrix& x, std::span<const EngagementLevel> y);
/// Loss plus its gradient in flatten() order.
double mlp_loss_and_gradient(const MlpWeights& w, const Matrix& x, std::span<const EngagementLevel> y,
                             Vector& gradient);

struct MlpModel {
  MlpParams params;
  MlpWeights weights;
};

MlpModel fit_mlp(const Matrix& x, std::span<const EngagementLevel> y, const MlpParams& params, std::uint64_t seed,
                 TrainingReport* report = nullptr);
LabelDistribution mlp_predict(const MlpModel& model, std::span<const double> x);

nlohmann::json mlp_to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& doc);

}  // namespace engage
