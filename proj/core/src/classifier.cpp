#include "engage/classifier.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace engage {

using nlohmann::json;

std::string_view to_string(Family family) {
  switch (family) {
    case Family::svm_linear: return "svm_linear";
    case Family::svm_rbf: return "svm_rbf";
    case Family::random_forest: return "random_forest";
    case Family::mlp: return "mlp";
    case Family::lstm: return "lstm";
  }
  return "random_forest";
}

Family parse_family(std::string_view text) {
  if (text == "svm_linear") return Family::svm_linear;
  if (text == "svm_rbf") return Family::svm_rbf;
  if (text == "random_forest" || text == "rf") return Family::random_forest;
  if (text == "mlp") return Family::mlp;
  if (text == "lstm") return Family::lstm;
  throw Error(ErrorKind::validation, "unknown classifier family '" + std::string(text) + "'");
}

std::string_view to_string(InputMode mode) {
  return mode == InputMode::middle_frame ? "middle_frame" : "full_sequence";
}

ClassifierSpec ClassifierSpec::defaults(Family family, std::uint64_t seed) {
  ClassifierSpec spec;
  spec.family = family;
  spec.seed = seed;
  spec.input_mode = family == Family::lstm ? InputMode::full_sequence : InputMode::middle_frame;
  spec.svm.kernel = family == Family::svm_linear ? Kernel::linear : Kernel::rbf;
  return spec;
}

void ClassifierSpec::validate() const {
  const bool wants_sequence = family == Family::lstm;
  if (wants_sequence != (input_mode == InputMode::full_sequence)) {
    throw Error(ErrorKind::validation, std::string("family ") + std::string(to_string(family)) +
                                           " requires input mode " + (wants_sequence ? "full_sequence" : "middle_frame"));
  }
  if ((family == Family::svm_linear) != (svm.kernel == Kernel::linear) &&
      (family == Family::svm_linear || family == Family::svm_rbf)) {
    throw Error(ErrorKind::validation, "SVM kernel does not match the family");
  }
  if (!(svm.C > 0.0)) throw Error(ErrorKind::validation, "svm.C must be positive");
  if (!(pca_fraction > 0.0 && pca_fraction <= 1.0)) throw Error(ErrorKind::validation, "pca_fraction must lie in (0, 1]");
  if (forest.trees == 0) throw Error(ErrorKind::validation, "forest.trees must be positive");
  if (mlp.hidden == 0 || mlp.batch_size == 0) throw Error(ErrorKind::validation, "mlp sizes must be positive");
  if (lstm.hidden == 0 || lstm.layers == 0 || lstm.batch_size == 0) {
    throw Error(ErrorKind::validation, "lstm sizes must be positive");
  }
}

namespace {

void reject_unknown(const json& object, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!object.is_object()) throw Error(ErrorKind::validation, std::string(where) + " must be an object");
  for (const auto& [key, value] : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorKind::validation, "unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read(const json& object, const char* key, T& out) {
  if (object.contains(key)) out = object[key].get<T>();
}

}  // namespace

json spec_to_json(const ClassifierSpec& s) {
  return {{"family", to_string(s.family)},
          {"input_mode", to_string(s.input_mode)},
          {"seed", s.seed},
          {"svm",
           {{"C", s.svm.C},
            {"gamma", s.svm.gamma},
            {"tolerance", s.svm.tolerance},
            {"platt_folds", s.svm.platt_folds},
            {"pca", s.svm_pca},
            {"pca_fraction", s.pca_fraction}}},
          {"forest",
           {{"trees", s.forest.trees},
            {"max_features", s.forest.max_features},
            {"min_leaf", s.forest.min_leaf},
            {"max_depth", s.forest.max_depth}}},
          {"mlp",
           {{"hidden", s.mlp.hidden},
            {"learning_rate", s.mlp.learning_rate},
            {"batch_size", s.mlp.batch_size},
            {"validation_fraction", s.mlp.validation_fraction},
            {"patience", s.mlp.patience},
            {"max_epochs", s.mlp.max_epochs}}},
          {"lstm",
           {{"hidden", s.lstm.hidden},
            {"layers", s.lstm.layers},
            {"dense", s.lstm.dense},
            {"learning_rate", s.lstm.learning_rate},
            {"epochs", s.lstm.epochs},
            {"batch_size", s.lstm.batch_size}}}};
}

ClassifierSpec spec_from_json(const json& doc) {
  reject_unknown(doc, {"family", "input_mode", "seed", "svm", "forest", "mlp", "lstm"}, "classifier");
  try {
    const Family family = parse_family(doc.value("family", std::string("random_forest")));
    ClassifierSpec s = ClassifierSpec::defaults(family);
    if (doc.contains("input_mode")) {
      const auto mode = doc["input_mode"].get<std::string>();
      if (mode == "middle_frame") s.input_mode = InputMode::middle_frame;
      else if (mode == "full_sequence") s.input_mode = InputMode::full_sequence;
      else throw Error(ErrorKind::validation, "unknown input_mode '" + mode + "'");
    }
    read(doc, "seed", s.seed);
    if (doc.contains("svm")) {
      const auto& v = doc["svm"];
      reject_unknown(v, {"C", "gamma", "tolerance", "platt_folds", "pca", "pca_fraction"}, "classifier.svm");
      read(v, "C", s.svm.C);
      read(v, "gamma", s.svm.gamma);
      read(v, "tolerance", s.svm.tolerance);
      read(v, "platt_folds", s.svm.platt_folds);
      read(v, "pca", s.svm_pca);
      read(v, "pca_fraction", s.pca_fraction);
    }
    if (doc.contains("forest")) {
      const auto& v = doc["forest"];
      reject_unknown(v, {"trees", "max_features", "min_leaf", "max_depth"}, "classifier.forest");
      read(v, "trees", s.forest.trees);
      read(v, "max_features", s.forest.max_features);
      read(v, "min_leaf", s.forest.min_leaf);
      read(v, "max_depth", s.forest.max_depth);
    }
    if (doc.contains("mlp")) {
      const auto& v = doc["mlp"];
      reject_unknown(v, {"hidden", "learning_rate", "batch_size", "validation_fraction", "patience", "max_epochs"},
                     "classifier.mlp");
      read(v, "hidden", s.mlp.hidden);
      read(v, "learning_rate", s.mlp.learning_rate);
      read(v, "batch_size", s.mlp.batch_size);
      read(v, "validation_fraction", s.mlp.validation_fraction);
      read(v, "patience", s.mlp.patience);
      read(v, "max_epochs", s.mlp.max_epochs);
    }
    if (doc.contains("lstm")) {
      const auto& v = doc["lstm"];
      reject_unknown(v, {"hidden", "layers", "dense", "learning_rate", "epochs", "batch_size"}, "classifier.lstm");
      read(v, "hidden", s.lstm.hidden);
      read(v, "layers", s.lstm.layers);
      read(v, "dense", s.lstm.dense);
      read(v, "learning_rate", s.lstm.learning_rate);
      read(v, "epochs", s.lstm.epochs);
      read(v, "batch_size", s.lstm.batch_size);
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, std::string("malformed classifier spec: ") + e.what());
  }
}

TrainedModel fit_classifier(const ClassifierSpec& spec, std::span<const Matrix> sequences,
                            std::span<const EngagementLevel> labels) {
  spec.validate();
  if (sequences.size() != labels.size()) throw Error(ErrorKind::dimension, "sequences and labels differ in length");
  if (sequences.empty()) throw Error(ErrorKind::validation, "no training data");
  TrainedModel model;
  model.spec = spec;
  model.input_dim = static_cast<std::size_t>(sequences.front().cols());
  for (const auto& s : sequences) {
    if (static_cast<std::size_t>(s.rows()) != kSequenceLength) {
      throw Error(ErrorKind::shape, "training sequence has " + std::to_string(s.rows()) + " frames, expected " +
                                        std::to_string(kSequenceLength));
    }
    if (static_cast<std::size_t>(s.cols()) != model.input_dim) {
      throw Error(ErrorKind::dimension, "training sequences differ in feature width");
    }
  }

  if (spec.family == Family::lstm) {
    model.state = fit_lstm(sequences, labels, spec.lstm, spec.seed, &model.report);
    return model;
  }

  Matrix rows(static_cast<Eigen::Index>(sequences.size()), static_cast<Eigen::Index>(model.input_dim));
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = sequences[i].row(static_cast<Eigen::Index>(kMiddleFrame));
  }
  model.report.seed = spec.seed;
  switch (spec.family) {
    case Family::svm_linear:
    case Family::svm_rbf: {
      Matrix features = rows;
      if (spec.svm_pca) {
        model.pca = fit_pca(rows, spec.pca_fraction);
        features = pca_transform_rows(*model.pca, rows);
      }
      SvmParams params = spec.svm;
      params.kernel = spec.family == Family::svm_linear ? Kernel::linear : Kernel::rbf;
      model.state = fit_svm(features, labels, params, spec.seed);
      break;
    }
    case Family::random_forest:
      model.state = fit_random_forest(rows, labels, spec.forest, spec.seed);
      break;
    case Family::mlp:
      model.state = fit_mlp(rows, labels, spec.mlp, spec.seed, &model.report);
      break;
    case Family::lstm:
      break;
  }
  return model;
}

LabelDistribution predict_distribution(const TrainedModel& model, std::span<const double> frame) {
  if (model.input_mode() != InputMode::middle_frame) {
    throw Error(ErrorKind::validation, "sequence-mode model cannot score a single frame");
  }
  if (frame.size() != model.input_dim) {
    throw Error(ErrorKind::dimension, "frame length " + std::to_string(frame.size()) + ", model expects " +
                                          std::to_string(model.input_dim));
  }
  if (const auto* svm = std::get_if<SvmModel>(&model.state)) {
    if (model.pca) {
      const Vector z = pca_transform(*model.pca, frame);
      return svm_predict(*svm, std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
    }
    return svm_predict(*svm, frame);
  }
  if (const auto* forest = std::get_if<ForestModel>(&model.state)) return forest_predict(*forest, frame);
  if (const auto* mlp = std::get_if<MlpModel>(&model.state)) return mlp_predict(*mlp, frame);
  throw Error(ErrorKind::validation, "model state does not support frame prediction");
}

LabelDistribution predict_distribution(const TrainedModel& model, const Matrix& sequence) {
  if (model.input_mode() != InputMode::full_sequence) {
    throw Error(ErrorKind::validation, "frame-mode model cannot score a whole sequence");
  }
  if (static_cast<std::size_t>(sequence.cols()) != model.input_dim) {
    throw Error(ErrorKind::dimension, "sequence width " + std::to_string(sequence.cols()) + ", model expects " +
                                          std::to_string(model.input_dim));
  }
  return lstm_predict(std::get<LstmModel>(model.state), sequence);
}

json model_to_json(const TrainedModel& model) {
  json doc;
  doc["format"] = "engage.model/1";
  doc["family"] = to_string(model.spec.family);
  doc["spec"] = spec_to_json(model.spec);
  doc["input_dim"] = model.input_dim;
  doc["report"] = {{"seed", model.report.seed},
                   {"epochs_run", model.report.epochs_run},
                   {"best_epoch", model.report.best_epoch},
                   {"stopped_early", model.report.stopped_early},
                   {"loss_curve", model.report.loss_curve},
                   {"validation_curve", model.report.validation_curve}};
  doc["pca"] = model.pca ? pca_to_json(*model.pca) : json(nullptr);
  std::visit(
      [&](const auto& state) {
        using T = std::decay_t<decltype(state)>;
        if constexpr (std::is_same_v<T, SvmModel>) doc["state"] = svm_to_json(state);
        else if constexpr (std::is_same_v<T, ForestModel>) doc["state"] = forest_to_json(state);
        else if constexpr (std::is_same_v<T, MlpModel>) doc["state"] = mlp_to_json(state);
        else doc["state"] = lstm_to_json(state);
      },
      model.state);
  return doc;
}

TrainedModel model_from_json(const json& doc) {
  try {
    if (doc.value("format", std::string()) != "engage.model/1") {
      throw Error(ErrorKind::parse, "not an engage model document");
    }
    TrainedModel model;
    model.spec = spec_from_json(doc.at("spec"));
    model.input_dim = doc.at("input_dim").get<std::size_t>();
    const auto& r = doc.at("report");
    model.report.seed = r.at("seed").get<std::uint64_t>();
    model.report.epochs_run = r.at("epochs_run").get<std::size_t>();
    model.report.best_epoch = r.at("best_epoch").get<std::size_t>();
    model.report.stopped_early = r.at("stopped_early").get<bool>();
    model.report.loss_curve = r.at("loss_curve").get<std::vector<double>>();
    model.report.validation_curve = r.at("validation_curve").get<std::vector<double>>();
    if (!doc.at("pca").is_null()) model.pca = pca_from_json(doc["pca"]);
    const auto& state = doc.at("state");
    switch (model.spec.family) {
      case Family::svm_linear:
      case Family::svm_rbf: model.state = svm_from_json(state); break;
      case Family::random_forest: model.state = forest_from_json(state); break;
      case Family::mlp: model.state = mlp_from_json(state); break;
      case Family::lstm: model.state = lstm_from_json(state); break;
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed model document: ") + e.what());
  }
}

}  // namespace engage
