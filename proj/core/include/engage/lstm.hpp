#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/mlp.hpp"
#include "engage/types.hpp"

namespace engage {

struct LstmParams {
  std::size_t hidden = 128;
  std::size_t layers = 2;
  std::size_t dense = 64;
  double learning_rate = 1e-3;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Gate blocks are stacked in the order input, forget, cell, output.
struct LstmLayer {
  Matrix w;  // 4h x input
  Matrix u;  // 4h x h
  Vector b;  // 4h
};

/// Stacked LSTM; the top layer's last hidden state feeds dense (ReLU) -> 3 logits.
struct LstmWeights {
  std::vector<LstmLayer> layers;
  Matrix w_dense;  // dense x h
  Vector b_dense;
  Matrix w_out;  // 3 x dense
  Vector b_out;

  std::size_t parameter_count() const;
  Vector flatten() const;
  void assign(const Vector& flat);
};

LstmWeights init_lstm(std::size_t input_dim, const LstmParams& params, std::uint64_t seed);

/// Mean softmax cross-entropy over `sequences` (each T x d, equal T).
double lstm_loss(const LstmWeights& w, std::span<const Matrix> sequences, std::span<const EngagementLevel> y);
/// Loss plus its full BPTT gradient in flatten() order.
double lstm_loss_and_gradient(const LstmWeights& w, std::span<const Matrix> sequences,
                              std::span<const EngagementLevel> y, Vector& gradient);

struct LstmModel {
  LstmParams params;
  LstmWeights weights;
};

/// Every sequence must have exactly kSequenceLength frames.
LstmModel fit_lstm(std::span<const Matrix> sequences, std::span<const EngagementLevel> y, const LstmParams& params,
                   std::uint64_t seed, TrainingReport* report = nullptr);
LabelDistribution lstm_predict(const LstmModel& model, const Matrix& sequence);

nlohmann::json lstm_to_json(const LstmModel& model);
LstmModel lstm_from_json(const nlohmann::json& doc);

}  // namespace engage
