#include "mseva/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mseva/common/error.hpp"

namespace mseva::eval {

ConfusionMatrix2 swap_classes(const ConfusionMatrix2& m) { return {m.tn, m.fp, m.fn, m.tp}; }

std::string to_string(F1Convention c) { return c == F1Convention::PositiveClass ? "positive-class" : "macro"; }

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

struct ClassScores {
  std::optional<double> precision, recall, f1;
};

ClassScores class_scores(const ConfusionMatrix2& m) {
  ClassScores s{ratio(m.tp, m.tp + m.fp), ratio(m.tp, m.tp + m.fn), std::nullopt};
  if (s.precision && s.recall) s.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
  return s;
}

std::optional<double> mean(std::optional<double> a, std::optional<double> b) {
  if (!a || !b) return std::nullopt;
  return (*a + *b) / 2.0;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

MetricsReport metrics_from_confusion(const ConfusionMatrix2& m, F1Convention convention) {
  if (m.tp < 0 || m.fn < 0 || m.fp < 0 || m.tn < 0) throw Error(ErrorCode::InvalidConfig, "negative confusion count");
  if (m.total() == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix has no samples");
  MetricsReport r;
  r.acc2 = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  r.support_positive = m.tp + m.fn;
  r.support_negative = m.fp + m.tn;
  r.convention = convention;
  const auto pos = class_scores(m);
  if (convention == F1Convention::PositiveClass) {
    r.precision = pos.precision;
    r.recall = pos.recall;
    r.f1 = pos.f1;
  } else {
    const auto neg = class_scores(swap_classes(m));
    r.precision = mean(pos.precision, neg.precision);
    r.recall = mean(pos.recall, neg.recall);
    r.f1 = mean(pos.f1, neg.f1);
  }
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"acc2", acc2},
          {"precision", opt(precision)},
          {"recall", opt(recall)},
          {"f1", opt(f1)},
          {"auc", opt(auc)},
          {"support", {{"positive", support_positive}, {"negative", support_negative}}},
          {"convention", to_string(convention)}};
}

double auc_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error(ErrorCode::InvalidConfig, "labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "AUC needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;  // 1-based average
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double relative_improvement(double baseline, double improved) {
  if (!(baseline > 0.0)) throw Error(ErrorCode::ZeroBaseline, "baseline must be positive");
  return (improved - baseline) / baseline;
}

ZeroLabel parse_zero_label(const std::string& s) {
  if (s == "negative") return ZeroLabel::Negative;
  if (s == "positive") return ZeroLabel::Positive;
  if (s == "drop") return ZeroLabel::Drop;
  throw Error(ErrorCode::InvalidConfig, "zero_label must be negative, positive or drop, got '" + s + "'");
}

std::optional<int> binarize_score(double value, ZeroLabel zero) {
  if (std::isnan(value)) throw Error(ErrorCode::InvalidConfig, "sentiment score is NaN");
  if (value < 0.0) return 0;
  if (value > 0.0) return 1;
  switch (zero) {
    case ZeroLabel::Negative: return 0;
    case ZeroLabel::Positive: return 1;
    case ZeroLabel::Drop: return std::nullopt;
  }
  return std::nullopt;
}

ConfusionMatrix2 confusion_from_labels(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw Error(ErrorCode::ShapeMismatch, "prediction and gold lengths differ");
  ConfusionMatrix2 m;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == 1) (predicted[i] == 1 ? m.tp : m.fn)++;
    else (predicted[i] == 1 ? m.fp : m.tn)++;
  }
  return m;
}

namespace {

int parse_sentiment(const nlohmann::json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "positive") return 1;
    if (s == "negative") return 0;
  } else if (v.is_number_integer()) {
    const int i = v.get<int>();
    if (i == 0 || i == 1) return i;
  }
  throw std::invalid_argument("sentiment must be \"positive\", \"negative\", 1 or 0");
}

}  // namespace

std::vector<PredictionRecord> parse_prediction_lines(const std::string& text, bool require_score) {
  std::vector<PredictionRecord> out;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.sentiment = parse_sentiment(j.contains("sentiment") ? j.at("sentiment") : j.at("label"));
      if (j.contains("score")) r.score = j.at("score").get<double>();
      else if (require_score) throw std::invalid_argument("missing score");
      else r.score = r.sentiment;
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

MetricsReport evaluate_predictions(std::span<const PredictionRecord> predictions,
                                   std::span<const PredictionRecord> gold, F1Convention convention) {
  std::map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : predictions) by_id[p.video_id] = &p;
  std::vector<int> pred_labels;
  std::vector<int> gold_labels;
  std::vector<double> scores;
  for (const auto& g : gold) {
    const auto it = by_id.find(g.video_id);
    if (it == by_id.end()) throw Error(ErrorCode::InvariantViolation, "no prediction for " + g.video_id);
    pred_labels.push_back(it->second->sentiment);
    gold_labels.push_back(g.sentiment);
    scores.push_back(it->second->score);
  }
  auto report = metrics_from_confusion(confusion_from_labels(pred_labels, gold_labels), convention);
  const auto pos = std::count(gold_labels.begin(), gold_labels.end(), 1);
  if (pos > 0 && pos < static_cast<std::ptrdiff_t>(gold_labels.size())) report.auc = auc_binary(scores, gold_labels);
  return report;
}

}  // namespace mseva::eval
