#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mseva::eval {

/// Binary confusion counts; "positive" is the positive-sentiment class.
struct ConfusionMatrix2 {
  std::int64_t tp = 0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t total() const { return tp + fn + fp + tn; }
};

/// The same counts seen with the negative class as "positive".
ConfusionMatrix2 swap_classes(const ConfusionMatrix2& m);

enum class F1Convention { PositiveClass, Macro };
std::string to_string(F1Convention c);

struct MetricsReport {
  double acc2 = 0.0;
  std::optional<double> precision;  // absent when tp + fp == 0
  std::optional<double> recall;     // absent when tp + fn == 0
  std::optional<double> f1;
  std::optional<double> auc;
  std::int64_t support_positive = 0;
  std::int64_t support_negative = 0;
  F1Convention convention = F1Convention::PositiveClass;

  nlohmann::json to_json() const;
};

/// Throws Error{EmptyMatrix} (or Error{InvalidConfig} for negative counts).
/// Macro averages precision/recall/F1 over both classes; each is absent if
/// either class leaves it undefined.
MetricsReport metrics_from_confusion(const ConfusionMatrix2& m,
                                     F1Convention convention = F1Convention::PositiveClass);

/// Mann-Whitney AUC; tied scores share the average rank. Labels are 0/1.
/// Throws Error{SingleClass}, or Error{ShapeMismatch} for unequal lengths.
double auc_binary(std::span<const double> scores, std::span<const int> labels);

/// (improved - baseline) / baseline. Throws Error{ZeroBaseline} unless
/// baseline > 0.
double relative_improvement(double baseline, double improved);

/// What a continuous sentiment score of exactly 0 becomes when binarized.
enum class ZeroLabel { Negative, Positive, Drop };
/// "negative", "positive" or "drop"; throws Error{InvalidConfig}.
ZeroLabel parse_zero_label(const std::string& s);
/// Binary label of a continuous score (e.g. -3..3): below 0 negative, above
/// 0 positive, 0 by `zero`. Empty when dropped. Throws Error{InvalidConfig}
/// for NaN.
std::optional<int> binarize_score(double value, ZeroLabel zero);

ConfusionMatrix2 confusion_from_labels(std::span<const int> predicted, std::span<const int> gold);

struct PredictionRecord {
  std::string video_id;
  int sentiment = 0;  // 1 positive, 0 negative
  double score = 0.0;
};

/// JSON lines {"video_id","sentiment","score"}; gold lines use the same
/// shape (score optional). Sentiment is "positive"/"negative" or 1/0.
/// Throws Error{MalformedLine} naming the 1-based line.
std::vector<PredictionRecord> parse_prediction_lines(const std::string& text, bool require_score);

/// Joins predictions to gold by video_id. Every gold id must have a
/// prediction (Error{InvariantViolation}). AUC is present when both gold
/// classes occur.
MetricsReport evaluate_predictions(std::span<const PredictionRecord> predictions,
                                   std::span<const PredictionRecord> gold,
                                   F1Convention convention = F1Convention::PositiveClass);

}  // namespace mseva::eval
