#include "engage/lstm.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "nn_common.hpp"

namespace engage {

std::size_t LstmWeights::parameter_count() const {
  std::size_t count = 0;
  for (const auto& l : layers) count += static_cast<std::size_t>(l.w.size() + l.u.size() + l.b.size());
  return count + static_cast<std::size_t>(w_dense.size() + b_dense.size() + w_out.size() + b_out.size());
}

Vector LstmWeights::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index offset = 0;
  for (const auto& l : layers) {
    nn::pack(l.w, flat, offset);
    nn::pack(l.u, flat, offset);
    nn::pack(l.b, flat, offset);
  }
  nn::pack(w_dense, flat, offset);
  nn::pack(b_dense, flat, offset);
  nn::pack(w_out, flat, offset);
  nn::pack(b_out, flat, offset);
  return flat;
}

void LstmWeights::assign(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw Error(ErrorKind::dimension, "LSTM parameter vector has the wrong length");
  }
  Eigen::Index offset = 0;
  for (auto& l : layers) {
    nn::unpack(l.w, flat, offset);
    nn::unpack(l.u, flat, offset);
    nn::unpack(l.b, flat, offset);
  }
  nn::unpack(w_dense, flat, offset);
  nn::unpack(b_dense, flat, offset);
  nn::unpack(w_out, flat, offset);
  nn::unpack(b_out, flat, offset);
}

LstmWeights init_lstm(std::size_t input_dim, const LstmParams& params, std::uint64_t seed) {
  if (params.layers == 0 || params.hidden == 0 || params.dense == 0) {
    throw Error(ErrorKind::validation, "LSTM layer sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  LstmWeights w;
  const auto h = static_cast<Eigen::Index>(params.hidden);
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < params.layers; ++l) {
    LstmLayer layer;
    layer.w.resize(4 * h, static_cast<Eigen::Index>(in));
    layer.u.resize(4 * h, h);
    nn::fan_uniform(layer.w, params.hidden, rng);
    nn::fan_uniform(layer.u, params.hidden, rng);
    layer.b = Vector::Zero(4 * h);
    w.layers.push_back(std::move(layer));
    in = params.hidden;
  }
  w.w_dense.resize(static_cast<Eigen::Index>(params.dense), h);
  nn::fan_uniform(w.w_dense, params.hidden, rng);
  w.b_dense = Vector::Zero(static_cast<Eigen::Index>(params.dense));
  w.w_out.resize(static_cast<Eigen::Index>(kLevelCount), static_cast<Eigen::Index>(params.dense));
  nn::fan_uniform(w.w_out, params.dense, rng);
  w.b_out = Vector::Zero(static_cast<Eigen::Index>(kLevelCount));
  return w;
}

namespace {

struct StepCache {
  Matrix input;   // B x in
  Matrix h_prev;  // B x h
  Matrix c_prev;
  Matrix i, f, g, o;
  Matrix c;
  Matrix tanh_c;
  Matrix h;
};

struct ForwardCache {
  std::vector<std::vector<StepCache>> layers;  // [layer][t]
  Matrix dense_pre;
  Matrix dense;
  Matrix probabilities;
};

/// Batches sequences into per-time-step input matrices (B x d).
std::vector<Matrix> time_major(std::span<const Matrix> sequences) {
  if (sequences.empty()) throw Error(ErrorKind::validation, "LSTM batch is empty");
  const Eigen::Index steps = sequences.front().rows();
  const Eigen::Index d = sequences.front().cols();
  std::vector<Matrix> out(static_cast<std::size_t>(steps), Matrix(static_cast<Eigen::Index>(sequences.size()), d));
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    if (sequences[b].rows() != steps || sequences[b].cols() != d) {
      throw Error(ErrorKind::shape, "LSTM batch mixes sequence shapes");
    }
    for (Eigen::Index t = 0; t < steps; ++t) out[static_cast<std::size_t>(t)].row(static_cast<Eigen::Index>(b)) = sequences[b].row(t);
  }
  return out;
}

ForwardCache forward(const LstmWeights& w, const std::vector<Matrix>& inputs) {
  ForwardCache cache;
  const Eigen::Index batch = inputs.front().rows();
  std::vector<Matrix> layer_input = inputs;
  for (const auto& layer : w.layers) {
    const Eigen::Index h = layer.u.cols();
    if (layer_input.front().cols() != layer.w.cols()) {
      throw Error(ErrorKind::dimension, "LSTM input width " + std::to_string(layer_input.front().cols()) +
                                            ", model expects " + std::to_string(layer.w.cols()));
    }
    std::vector<StepCache> steps;
    steps.reserve(layer_input.size());
    Matrix h_prev = Matrix::Zero(batch, h);
    Matrix c_prev = Matrix::Zero(batch, h);
    std::vector<Matrix> outputs;
    for (const auto& x : layer_input) {
      StepCache s;
      const Matrix z = ((x * layer.w.transpose() + h_prev * layer.u.transpose()).rowwise() + layer.b.transpose());
      s.i = nn::sigmoid(z.middleCols(0, h));
      s.f = nn::sigmoid(z.middleCols(h, h));
      s.g = z.middleCols(2 * h, h).array().tanh().matrix();
      s.o = nn::sigmoid(z.middleCols(3 * h, h));
      s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
      s.tanh_c = s.c.array().tanh().matrix();
      s.h = s.o.cwiseProduct(s.tanh_c);
      s.input = x;
      s.h_prev = h_prev;
      s.c_prev = c_prev;
      h_prev = s.h;
      c_prev = s.c;
      outputs.push_back(s.h);
      steps.push_back(std::move(s));
    }
    cache.layers.push_back(std::move(steps));
    layer_input = std::move(outputs);
  }
  const Matrix& last = layer_input.back();
  cache.dense_pre = (last * w.w_dense.transpose()).rowwise() + w.b_dense.transpose();
  cache.dense = cache.dense_pre.cwiseMax(0.0);
  cache.probabilities = (cache.dense * w.w_out.transpose()).rowwise() + w.b_out.transpose();
  nn::softmax_rows(cache.probabilities);
  return cache;
}

}  // namespace

double lstm_loss(const LstmWeights& w, std::span<const Matrix> sequences, std::span<const EngagementLevel> y) {
  if (sequences.size() != y.size()) throw Error(ErrorKind::dimension, "LSTM labels length mismatch");
  return nn::cross_entropy(forward(w, time_major(sequences)).probabilities, y);
}

double lstm_loss_and_gradient(const LstmWeights& w, std::span<const Matrix> sequences,
                              std::span<const EngagementLevel> y, Vector& gradient) {
  if (sequences.size() != y.size()) throw Error(ErrorKind::dimension, "LSTM labels length mismatch");
  const auto inputs = time_major(sequences);
  const ForwardCache cache = forward(w, inputs);
  const double loss = nn::cross_entropy(cache.probabilities, y);

  LstmWeights g = w;  // same shapes; every block overwritten below
  const Matrix d_logits = nn::softmax_gradient(cache.probabilities, y);
  g.w_out = d_logits.transpose() * cache.dense;
  g.b_out = d_logits.colwise().sum().transpose();
  Matrix d_dense = d_logits * w.w_out;
  d_dense.array() *= (cache.dense_pre.array() > 0.0).cast<double>();
  g.w_dense = d_dense.transpose() * cache.layers.back().back().h;
  g.b_dense = d_dense.colwise().sum().transpose();

  const std::size_t steps = inputs.size();
  const Eigen::Index batch = inputs.front().rows();
  // Gradient arriving at each time step's hidden output from above.
  std::vector<Matrix> d_output(steps);
  for (std::size_t t = 0; t < steps; ++t) d_output[t] = Matrix::Zero(batch, w.layers.back().u.cols());
  d_output.back() = d_dense * w.w_dense;

  for (std::size_t li = w.layers.size(); li-- > 0;) {
    const auto& layer = w.layers[li];
    auto& grad = g.layers[li];
    const Eigen::Index h = layer.u.cols();
    grad.w.setZero();
    grad.u.setZero();
    grad.b.setZero();
    Matrix dh_next = Matrix::Zero(batch, h);
    Matrix dc_next = Matrix::Zero(batch, h);
    std::vector<Matrix> d_input(steps);
    for (std::size_t t = steps; t-- > 0;) {
      const StepCache& s = cache.layers[li][t];
      const Matrix dh = d_output[t] + dh_next;
      const Matrix d_o = dh.cwiseProduct(s.tanh_c);
      const Matrix dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
      Matrix dz(batch, 4 * h);
      dz.middleCols(0, h) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
      dz.middleCols(h, h) = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
      dz.middleCols(2 * h, h) = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
      dz.middleCols(3 * h, h) = d_o.cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
      dc_next = dc.cwiseProduct(s.f);
      grad.w.noalias() += dz.transpose() * s.input;
      grad.u.noalias() += dz.transpose() * s.h_prev;
      grad.b += dz.colwise().sum().transpose();
      d_input[t] = dz * layer.w;
      dh_next = dz * layer.u;
    }
    d_output = std::move(d_input);
  }
  gradient = g.flatten();
  return loss;
}

LstmModel fit_lstm(std::span<const Matrix> sequences, std::span<const EngagementLevel> y, const LstmParams& params,
                   std::uint64_t seed, TrainingReport* report) {
  if (sequences.empty()) throw Error(ErrorKind::validation, "LSTM training needs data");
  if (sequences.size() != y.size()) throw Error(ErrorKind::dimension, "LSTM samples and labels differ in length");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (static_cast<std::size_t>(sequences[i].rows()) != kSequenceLength) {
      throw Error(ErrorKind::shape, "sequence " + std::to_string(i) + " has " + std::to_string(sequences[i].rows()) +
                                        " frames, expected " + std::to_string(kSequenceLength));
    }
  }
  const auto d = static_cast<std::size_t>(sequences.front().cols());
  LstmModel model{params, init_lstm(d, params, mix_seed(seed, 1))};
  nn::Adam adam(model.weights.parameter_count(), params.learning_rate, params.beta1, params.beta2, params.epsilon);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  TrainingReport local;
  local.seed = seed;
  Vector params_flat = model.weights.flatten();
  Vector gradient;
  std::vector<Matrix> batch_x;
  std::vector<EngagementLevel> batch_y;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
      const std::size_t end = std::min(order.size(), start + params.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch_x.push_back(sequences[order[k]]);
        batch_y.push_back(y[order[k]]);
      }
      const double loss = lstm_loss_and_gradient(model.weights, batch_x, batch_y, gradient);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::divergence, "LSTM loss became non-finite in epoch " + std::to_string(epoch + 1));
      }
      epoch_loss += loss * static_cast<double>(end - start);
      adam.step(params_flat, gradient);
      model.weights.assign(params_flat);
    }
    local.loss_curve.push_back(epoch_loss / static_cast<double>(order.size()));
    local.epochs_run = epoch + 1;
  }
  local.best_epoch = local.epochs_run == 0 ? 0 : local.epochs_run - 1;
  if (report != nullptr) *report = std::move(local);
  return model;
}

LabelDistribution lstm_predict(const LstmModel& model, const Matrix& sequence) {
  if (static_cast<std::size_t>(sequence.rows()) != kSequenceLength) {
    throw Error(ErrorKind::shape, "LSTM input has " + std::to_string(sequence.rows()) + " frames, expected " +
                                      std::to_string(kSequenceLength));
  }
  const ForwardCache cache = forward(model.weights, time_major(std::span<const Matrix>(&sequence, 1)));
  LabelDistribution out;
  for (std::size_t l = 0; l < kLevelCount; ++l) out.p[l] = cache.probabilities(0, static_cast<Eigen::Index>(l));
  return out;
}

nlohmann::json lstm_to_json(const LstmModel& model) {
  const auto& p = model.params;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.weights.layers) {
    layers.push_back({{"w", nn::matrix_to_json(l.w)}, {"u", nn::matrix_to_json(l.u)}, {"b", nn::vector_to_json(l.b)}});
  }
  return {{"hidden", p.hidden},
          {"layers", p.layers},
          {"dense", p.dense},
          {"learning_rate", p.learning_rate},
          {"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"beta1", p.beta1},
          {"beta2", p.beta2},
          {"epsilon", p.epsilon},
          {"recurrent", layers},
          {"w_dense", nn::matrix_to_json(model.weights.w_dense)},
          {"b_dense", nn::vector_to_json(model.weights.b_dense)},
          {"w_out", nn::matrix_to_json(model.weights.w_out)},
          {"b_out", nn::vector_to_json(model.weights.b_out)}};
}

LstmModel lstm_from_json(const nlohmann::json& doc) {
  LstmModel model;
  auto& p = model.params;
  p.hidden = doc.at("hidden").get<std::size_t>();
  p.layers = doc.at("layers").get<std::size_t>();
  p.dense = doc.at("dense").get<std::size_t>();
  p.learning_rate = doc.at("learning_rate").get<double>();
  p.epochs = doc.at("epochs").get<std::size_t>();
  p.batch_size = doc.at("batch_size").get<std::size_t>();
  p.beta1 = doc.at("beta1").get<double>();
  p.beta2 = doc.at("beta2").get<double>();
  p.epsilon = doc.at("epsilon").get<double>();
  for (const auto& l : doc.at("recurrent")) {
    model.weights.layers.push_back(
        {nn::matrix_from_json(l.at("w")), nn::matrix_from_json(l.at("u")), nn::vector_from_json(l.at("b"))});
  }
  model.weights.w_dense = nn::matrix_from_json(doc.at("w_dense"));
  model.weights.b_dense = nn::vector_from_json(doc.at("b_dense"));
  model.weights.w_out = nn::matrix_from_json(doc.at("w_out"));
  model.weights.b_out = nn::vector_from_json(doc.at("b_out"));
  return model;
}

}  // namespace engage
