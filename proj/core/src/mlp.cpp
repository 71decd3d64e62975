#include "engage/mlp.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "nn_common.hpp"

namespace engage {

bool EarlyStopping::update(double validation_loss) {
  const std::size_t epoch = epoch_++;
  if (!has_best_ || validation_loss < best_loss_) {
    has_best_ = true;
    best_loss_ = validation_loss;
    best_epoch_ = epoch;
    epochs_since_best_ = 0;
    return true;
  }
  ++epochs_since_best_;
  return false;
}

std::size_t MlpWeights::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

Vector MlpWeights::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index offset = 0;
  nn::pack(w1, flat, offset);
  nn::pack(b1, flat, offset);
  nn::pack(w2, flat, offset);
  nn::pack(b2, flat, offset);
  return flat;
}

void MlpWeights::assign(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw Error(ErrorKind::dimension, "MLP parameter vector has the wrong length");
  }
  Eigen::Index offset = 0;
  nn::unpack(w1, flat, offset);
  nn::unpack(b1, flat, offset);
  nn::unpack(w2, flat, offset);
  nn::unpack(b2, flat, offset);
}

MlpWeights init_mlp(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MlpWeights w;
  w.w1.resize(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(input_dim));
  w.w2.resize(static_cast<Eigen::Index>(kLevelCount), static_cast<Eigen::Index>(hidden));
  nn::fan_uniform(w.w1, input_dim, rng);
  nn::fan_uniform(w.w2, hidden, rng);
  w.b1 = Vector::Zero(static_cast<Eigen::Index>(hidden));
  w.b2 = Vector::Zero(static_cast<Eigen::Index>(kLevelCount));
  return w;
}

namespace {

struct Forward {
  Matrix hidden;         // post-activation
  Matrix probabilities;
};

Forward forward(const MlpWeights& w, const Matrix& x) {
  Forward f;
  f.hidden = ((x * w.w1.transpose()).rowwise() + w.b1.transpose()).cwiseMax(0.0);
  f.probabilities = (f.hidden * w.w2.transpose()).rowwise() + w.b2.transpose();
  nn::softmax_rows(f.probabilities);
  return f;
}

void check_input(const MlpWeights& w, const Matrix& x, std::size_t labels) {
  if (x.cols() != w.w1.cols()) {
    throw Error(ErrorKind::dimension, "MLP input width " + std::to_string(x.cols()) + ", model expects " +
                                          std::to_string(w.w1.cols()));
  }
  if (static_cast<std::size_t>(x.rows()) != labels) throw Error(ErrorKind::dimension, "MLP labels length mismatch");
}

Matrix gather(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

double mlp_loss(const MlpWeights& w, const Matrix& x, std::span<const EngagementLevel> y) {
  check_input(w, x, y.size());
  return nn::cross_entropy(forward(w, x).probabilities, y);
}

double mlp_loss_and_gradient(const MlpWeights& w, const Matrix& x, std::span<const EngagementLevel> y,
                             Vector& gradient) {
  check_input(w, x, y.size());
  const Forward f = forward(w, x);
  const double loss = nn::cross_entropy(f.probabilities, y);
  const Matrix d_logits = nn::softmax_gradient(f.probabilities, y);
  MlpWeights g;
  g.w2 = d_logits.transpose() * f.hidden;
  g.b2 = d_logits.colwise().sum().transpose();
  Matrix d_hidden = d_logits * w.w2;
  d_hidden.array() *= (f.hidden.array() > 0.0).cast<double>();
  g.w1 = d_hidden.transpose() * x;
  g.b1 = d_hidden.colwise().sum().transpose();
  gradient = g.flatten();
  return loss;
}

MlpModel fit_mlp(const Matrix& x, std::span<const EngagementLevel> y, const MlpParams& params, std::uint64_t seed,
                 TrainingReport* report) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 10) throw Error(ErrorKind::validation, "MLP training needs at least 10 samples for the validation split");
  if (n != y.size()) throw Error(ErrorKind::dimension, "MLP samples and labels differ in length");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto validation_count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(params.validation_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> validation(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(validation_count));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(validation_count), order.end());
  const Matrix x_val = gather(x, validation);
  std::vector<EngagementLevel> y_val;
  for (auto i : validation) y_val.push_back(y[i]);

  MlpModel model{params, init_mlp(static_cast<std::size_t>(x.cols()), params.hidden, mix_seed(seed, 1))};
  TrainingReport local;
  local.seed = seed;
  EarlyStopping stopper(params.patience);
  Vector best = model.weights.flatten();
  Vector gradient;

  for (std::size_t epoch = 0; epoch < params.max_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train.size(); start += params.batch_size) {
      const std::size_t end = std::min(train.size(), start + params.batch_size);
      const std::span<const std::size_t> batch(train.data() + start, end - start);
      const Matrix xb = gather(x, batch);
      std::vector<EngagementLevel> yb;
      for (auto i : batch) yb.push_back(y[i]);
      const double loss = mlp_loss_and_gradient(model.weights, xb, yb, gradient);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::divergence, "MLP loss became non-finite in epoch " + std::to_string(epoch + 1));
      }
      epoch_loss += loss * static_cast<double>(batch.size());
      Vector flat = model.weights.flatten();
      flat -= params.learning_rate * gradient;
      model.weights.assign(flat);
    }
    local.loss_curve.push_back(epoch_loss / static_cast<double>(train.size()));
    const double val_loss = mlp_loss(model.weights, x_val, y_val);
    if (!std::isfinite(val_loss)) {
      throw Error(ErrorKind::divergence, "MLP validation loss became non-finite in epoch " + std::to_string(epoch + 1));
    }
    local.validation_curve.push_back(val_loss);
    local.epochs_run = epoch + 1;
    if (stopper.update(val_loss)) best = model.weights.flatten();
    if (stopper.should_stop()) {
      local.stopped_early = true;
      break;
    }
  }
  model.weights.assign(best);
  local.best_epoch = stopper.best_epoch();
  if (report != nullptr) *report = std::move(local);
  return model;
}

LabelDistribution mlp_predict(const MlpModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.weights.w1.cols()) {
    throw Error(ErrorKind::dimension, "MLP input length " + std::to_string(x.size()) + ", model expects " +
                                          std::to_string(model.weights.w1.cols()));
  }
  const Matrix row = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  const Forward f = forward(model.weights, row);
  LabelDistribution out;
  for (std::size_t l = 0; l < kLevelCount; ++l) out.p[l] = f.probabilities(0, static_cast<Eigen::Index>(l));
  return out;
}

nlohmann::json mlp_to_json(const MlpModel& model) {
  const auto& p = model.params;
  return {{"hidden", p.hidden},
          {"learning_rate", p.learning_rate},
          {"batch_size", p.batch_size},
          {"validation_fraction", p.validation_fraction},
          {"patience", p.patience},
          {"max_epochs", p.max_epochs},
          {"w1", nn::matrix_to_json(model.weights.w1)},
          {"b1", nn::vector_to_json(model.weights.b1)},
          {"w2", nn::matrix_to_json(model.weights.w2)},
          {"b2", nn::vector_to_json(model.weights.b2)}};
}

MlpModel mlp_from_json(const nlohmann::json& doc) {
  MlpModel model;
  model.params.hidden = doc.at("hidden").get<std::size_t>();
  model.params.learning_rate = doc.at("learning_rate").get<double>();
  model.params.batch_size = doc.at("batch_size").get<std::size_t>();
  model.params.validation_fraction = doc.at("validation_fraction").get<double>();
  model.params.patience = doc.at("patience").get<std::size_t>();
  model.params.max_epochs = doc.at("max_epochs").get<std::size_t>();
  model.weights.w1 = nn::matrix_from_json(doc.at("w1"));
  model.weights.b1 = nn::vector_from_json(doc.at("b1"));
  model.weights.w2 = nn::matrix_from_json(doc.at("w2"));
  model.weights.b2 = nn::vector_from_json(doc.at("b2"));
  return model;
}

}  // namespace engage
