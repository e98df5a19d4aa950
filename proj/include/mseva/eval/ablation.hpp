#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mseva/eval/metrics.hpp"
#include "mseva/model/emotion_model.hpp"

namespace mseva::eval {

enum class TextSource { Title, Transcript, Manual, Automatic };
std::string to_string(TextSource s);
/// Throws Error{InvalidConfig}.
TextSource parse_text_source(const std::string& s);

struct AblationItem {
  std::string id;
  int gold = 0;  // 1 positive, 0 negative
  std::map<TextSource, std::string> texts;
  model::SegmentInputs inputs;  // faces and audio; `text` is replaced per experiment
};

/// Positive-sentiment score in [0, 1] for one input.
class SentimentScorer {
 public:
  virtual ~SentimentScorer() = default;
  virtual double positive_score(const model::SegmentInputs& inputs) const = 0;
};

/// Fused positive-class probability of an EmotionModel.
class ModelScorer final : public SentimentScorer {
 public:
  /// Throws Error{ModelNotLoaded} for a null model.
  ModelScorer(std::shared_ptr<const model::EmotionModel> model, std::shared_ptr<const model::TextBackend> text);
  double positive_score(const model::SegmentInputs& inputs) const override;

 private:
  std::shared_ptr<const model::EmotionModel> model_;
  std::shared_ptr<const model::TextBackend> text_;
};

struct AblationResult {
  TextSource source = TextSource::Title;
  MetricsReport metrics;
  std::optional<double> improvement_acc2;  // relative to the baseline experiment
  std::optional<double> improvement_f1;
};

/// Scores every item once per text source, changing nothing but the text.
/// Predictions are positive when score >= 0.5. The baseline's own result
/// carries improvement 0. Throws Error{MissingTextVariant} naming the item.
std::vector<AblationResult> run_ablation(const std::vector<TextSource>& experiments, TextSource baseline,
                                         const std::vector<AblationItem>& dataset, const SentimentScorer& scorer,
                                         F1Convention convention = F1Convention::PositiveClass);

nlohmann::json to_json(const std::vector<AblationResult>& results, TextSource baseline);

}  // namespace mseva::eval
