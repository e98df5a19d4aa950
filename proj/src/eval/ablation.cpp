#include "mseva/eval/ablation.hpp"

#include <algorithm>

#include "mseva/common/error.hpp"

namespace mseva::eval {

std::string to_string(TextSource s) {
  switch (s) {
    case TextSource::Title: return "title";
    case TextSource::Transcript: return "transcript";
    case TextSource::Manual: return "manual";
    case TextSource::Automatic: return "automatic";
  }
  return "unknown";
}

TextSource parse_text_source(const std::string& s) {
  for (auto t : {TextSource::Title, TextSource::Transcript, TextSource::Manual, TextSource::Automatic}) {
    if (to_string(t) == s) return t;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown text source '" + s + "'");
}

ModelScorer::ModelScorer(std::shared_ptr<const model::EmotionModel> model, std::shared_ptr<const model::TextBackend> text)
    : model_(std::move(model)), text_(std::move(text)) {
  if (!model_) throw Error(ErrorCode::ModelNotLoaded, "ablation needs a loaded model");
}

double ModelScorer::positive_score(const model::SegmentInputs& inputs) const {
  return model_->infer_segment(inputs, *text_).positive_probability;
}

std::vector<AblationResult> run_ablation(const std::vector<TextSource>& experiments, TextSource baseline,
                                         const std::vector<AblationItem>& dataset, const SentimentScorer& scorer,
                                         F1Convention convention) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "ablation dataset is empty");
  std::vector<TextSource> sources = experiments;
  if (std::find(sources.begin(), sources.end(), baseline) == sources.end()) sources.insert(sources.begin(), baseline);
  for (const auto& item : dataset) {
    for (auto s : sources) {
      if (!item.texts.contains(s)) {
        throw Error(ErrorCode::MissingTextVariant, "item " + item.id + " has no " + to_string(s) + " text");
      }
    }
  }

  std::vector<AblationResult> results;
  std::vector<int> gold;
  for (const auto& item : dataset) gold.push_back(item.gold);
  const auto positives = std::count(gold.begin(), gold.end(), 1);
  const bool both_classes = positives > 0 && positives < static_cast<std::ptrdiff_t>(gold.size());

  for (auto s : sources) {
    std::vector<int> predicted;
    std::vector<double> scores;
    for (const auto& item : dataset) {
      model::SegmentInputs in = item.inputs;
      in.text = item.texts.at(s);
      const double score = scorer.positive_score(in);
      scores.push_back(score);
      predicted.push_back(score >= 0.5 ? 1 : 0);
    }
    AblationResult r;
    r.source = s;
    r.metrics = metrics_from_confusion(confusion_from_labels(predicted, gold), convention);
    if (both_classes) r.metrics.auc = auc_binary(scores, gold);
    results.push_back(std::move(r));
  }

  const auto& base = *std::find_if(results.begin(), results.end(), [&](const auto& r) { return r.source == baseline; });
  const MetricsReport base_metrics = base.metrics;
  for (auto& r : results) {
    if (base_metrics.acc2 > 0.0) r.improvement_acc2 = relative_improvement(base_metrics.acc2, r.metrics.acc2);
    if (base_metrics.f1 && *base_metrics.f1 > 0.0 && r.metrics.f1) {
      r.improvement_f1 = relative_improvement(*base_metrics.f1, *r.metrics.f1);
    }
  }
  return results;
}

nlohmann::json to_json(const std::vector<AblationResult>& results, TextSource baseline) {
  nlohmann::json out = {{"baseline", to_string(baseline)}, {"experiments", nlohmann::json::array()}};
  for (const auto& r : results) {
    out["experiments"].push_back({{"text_source", to_string(r.source)},
                                  {"metrics", r.metrics.to_json()},
                                  {"improvement_acc2", r.improvement_acc2 ? nlohmann::json(*r.improvement_acc2) : nlohmann::json(nullptr)},
                                  {"improvement_f1", r.improvement_f1 ? nlohmann::json(*r.improvement_f1) : nlohmann::json(nullptr)}});
  }
  return out;
}

}  // namespace mseva::eval
