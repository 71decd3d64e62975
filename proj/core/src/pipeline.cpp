#include "engage/pipeline.hpp"

#include <functional>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

namespace engage {

using nlohmann::json;

std::string_view to_string(InputSelection selection) {
  switch (selection) {
    case InputSelection::attention: return "attention";
    case InputSelection::affect: return "affect";
    case InputSelection::feature_fusion: return "feature_fusion";
    case InputSelection::score_fusion: return "score_fusion";
  }
  return "attention";
}

InputSelection parse_input_selection(std::string_view text) {
  if (text == "attention") return InputSelection::attention;
  if (text == "affect") return InputSelection::affect;
  if (text == "feature_fusion" || text == "feature") return InputSelection::feature_fusion;
  if (text == "score_fusion" || text == "score") return InputSelection::score_fusion;
  throw Error(ErrorKind::validation, "unknown input selection '" + std::string(text) + "'");
}

json pipeline_spec_to_json(const PipelineSpec& spec) {
  return {{"classifier", spec_to_json(spec.classifier)}, {"input", to_string(spec.input)}};
}

PipelineSpec pipeline_spec_from_json(const json& doc) {
  PipelineSpec spec;
  spec.classifier = spec_from_json(doc.at("classifier"));
  spec.input = parse_input_selection(doc.at("input").get<std::string>());
  return spec;
}

bool Sample::has(InputSelection selection) const {
  switch (selection) {
    case InputSelection::attention: return attention.has_value();
    case InputSelection::affect: return affect.has_value();
    default: return attention.has_value() && affect.has_value();
  }
}

const Matrix& Sample::modality(Modality m) const {
  const auto& slot = m == Modality::attention ? attention : affect;
  if (!slot) {
    throw Error(ErrorKind::no_data, "sample " + student_id + "/" + session_id + "/" + std::to_string(second) +
                                        " lacks the " + std::string(to_string(m)) + " modality");
  }
  return *slot;
}

std::vector<Sample> assemble_samples(const LabeledSequenceSet& set) {
  std::map<std::tuple<std::string, std::string, std::int64_t>, Sample> grouped;
  for (const auto& entry : set.entries) {
    const auto& s = entry.sequence;
    auto& sample = grouped[{s.student_id, s.session_id, s.second_index}];
    sample.student_id = s.student_id;
    sample.session_id = s.session_id;
    sample.second = s.second_index;
    sample.level = entry.level;
    sample.rating = entry.rating;
    (s.modality == Modality::attention ? sample.attention : sample.affect) = s.frames;
  }
  std::vector<Sample> out;
  out.reserve(grouped.size());
  for (auto& [key, sample] : grouped) out.push_back(std::move(sample));
  return out;
}

std::vector<Sample> filter_samples(std::span<const Sample> samples, InputSelection selection) {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.has(selection)) out.push_back(s);
  }
  return out;
}

namespace {

Matrix model_input(const Sample& sample, InputSelection selection) {
  switch (selection) {
    case InputSelection::attention: return sample.modality(Modality::attention);
    case InputSelection::affect: return sample.modality(Modality::affect);
    case InputSelection::feature_fusion:
      return fuse_feature_frames(sample.modality(Modality::attention), sample.modality(Modality::affect));
    case InputSelection::score_fusion: break;
  }
  throw Error(ErrorKind::validation, "score fusion has no single model input");
}

TrainedModel fit_on(const ClassifierSpec& spec, std::span<const Sample> samples,
                    const std::function<Matrix(const Sample&)>& input) {
  std::vector<Matrix> sequences;
  std::vector<EngagementLevel> labels;
  sequences.reserve(samples.size());
  for (const auto& s : samples) {
    sequences.push_back(input(s));
    labels.push_back(s.level);
  }
  return fit_classifier(spec, sequences, labels);
}

LabelDistribution single_uncertainty(const TrainedModel& model, const Matrix& frames) {
  if (model.input_mode() == InputMode::full_sequence) return predict_distribution(model, frames);
  return predict_distribution(model, row_span(frames, static_cast<Eigen::Index>(kMiddleFrame)));
}

Sequence as_sequence(const Sample& sample, Matrix frames, Modality modality) {
  return Sequence{sample.student_id, sample.session_id, sample.second, modality, std::move(frames)};
}

}  // namespace

EngagementModel fit_engagement_model(const PipelineSpec& spec, std::span<const Sample> samples) {
  for (const auto& s : samples) {
    if (!s.has(spec.input)) {
      throw Error(ErrorKind::no_data, "training sample " + s.student_id + "/" + std::to_string(s.second) +
                                          " lacks data for input '" + std::string(to_string(spec.input)) + "'");
    }
  }
  EngagementModel model{spec, {}};
  if (spec.input == InputSelection::score_fusion) {
    model.models.push_back(fit_on(spec.classifier, samples, [](const Sample& s) { return s.modality(Modality::attention); }));
    model.models.push_back(fit_on(spec.classifier, samples, [](const Sample& s) { return s.modality(Modality::affect); }));
  } else {
    model.models.push_back(fit_on(spec.classifier, samples, [&](const Sample& s) { return model_input(s, spec.input); }));
  }
  return model;
}

SequencePrediction predict_sample(const EngagementModel& model, const Sample& sample) {
  if (model.spec.input == InputSelection::score_fusion) {
    const ModalityPair pair{as_sequence(sample, sample.modality(Modality::attention), Modality::attention),
                            as_sequence(sample, sample.modality(Modality::affect), Modality::affect)};
    return predict_sequence(model.models.at(0), model.models.at(1), pair);
  }
  const Modality tag = model.spec.input == InputSelection::affect ? Modality::affect : Modality::attention;
  return predict_sequence(model.models.at(0), as_sequence(sample, model_input(sample, model.spec.input), tag));
}

LabelDistribution uncertainty_distribution(const EngagementModel& model, const Sample& sample) {
  if (model.spec.input == InputSelection::score_fusion) {
    return fuse_scores(single_uncertainty(model.models.at(0), sample.modality(Modality::attention)),
                       single_uncertainty(model.models.at(1), sample.modality(Modality::affect)));
  }
  return single_uncertainty(model.models.at(0), model_input(sample, model.spec.input));
}

json engagement_model_to_json(const EngagementModel& model) {
  json models = json::array();
  for (const auto& m : model.models) models.push_back(model_to_json(m));
  return {{"format", "engage.pipeline/1"}, {"spec", pipeline_spec_to_json(model.spec)}, {"models", models}};
}

EngagementModel engagement_model_from_json(const json& doc) {
  try {
    if (doc.value("format", std::string()) != "engage.pipeline/1") {
      throw Error(ErrorKind::parse, "not an engage pipeline document");
    }
    EngagementModel model;
    model.spec = pipeline_spec_from_json(doc.at("spec"));
    for (const auto& m : doc.at("models")) model.models.push_back(model_from_json(m));
    const std::size_t expected = model.spec.input == InputSelection::score_fusion ? 2 : 1;
    if (model.models.size() != expected) throw Error(ErrorKind::parse, "pipeline document has the wrong model count");
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed pipeline document: ") + e.what());
  }
}

}  // namespace engage
