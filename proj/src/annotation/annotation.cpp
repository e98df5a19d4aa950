#include "mseva/annotation/annotation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"

namespace mseva::annotation {

std::string to_string(Label label) {
  switch (label) {
    case Label::Positive: return "positive";
    case Label::Negative: return "negative";
    case Label::Uncertain: return "uncertain";
  }
  return "uncertain";
}

Label parse_label(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "positive" || t == "pos") return Label::Positive;
  if (t == "negative" || t == "neg") return Label::Negative;
  if (t == "uncertain" || t == "unc") return Label::Uncertain;
  throw Error(ErrorCode::InvalidConfig, "unknown label '" + text + "'");
}

RatingMatrix::RatingMatrix(std::size_t items, std::size_t categories)
    : items_(items), categories_(categories), counts_(items * categories, 0) {}

RatingMatrix RatingMatrix::from_rows(const std::vector<std::vector<int>>& rows) {
  const std::size_t k = rows.empty() ? 0 : rows.front().size();
  RatingMatrix m(rows.size(), k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != k) throw Error(ErrorCode::InvariantViolation, "ragged rating matrix");
    for (std::size_t j = 0; j < k; ++j) {
      if (rows[i][j] < 0) throw Error(ErrorCode::InvariantViolation, "negative rating count");
      m.at(i, j) = rows[i][j];
    }
  }
  m.raters();
  return m;
}

int RatingMatrix::raters() const {
  int n = -1;
  for (std::size_t i = 0; i < items_; ++i) {
    int row = 0;
    for (std::size_t j = 0; j < categories_; ++j) row += at(i, j);
    if (n >= 0 && row != n) {
      throw Error(ErrorCode::InvariantViolation, "item " + std::to_string(i) + " has " + std::to_string(row) +
                                                     " ratings, expected " + std::to_string(n));
    }
    n = row;
  }
  return std::max(n, 0);
}

std::vector<AnnotationRecord> parse_ratings_csv(const std::string& contents) {
  std::vector<AnnotationRecord> records;
  std::istringstream in(contents);
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(col);
    if (header) {
      header = false;
      if (!cols.empty() && cols[0] == "video_id") continue;
    }
    if (cols.size() != 3) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": expected 3 columns");
    }
    records.push_back({cols[0], cols[1], parse_label(cols[2])});
  }
  return records;
}

std::vector<AnnotationRecord> read_ratings_csv(const std::filesystem::path& path) {
  return parse_ratings_csv(read_file(path));
}

namespace {

std::map<std::string, std::vector<const AnnotationRecord*>> group_by_video(
    std::span<const AnnotationRecord> records) {
  std::map<std::string, std::vector<const AnnotationRecord*>> by_video;
  for (const auto& r : records) by_video[r.video_id].push_back(&r);
  return by_video;
}

}  // namespace

std::vector<DatasetLabel> resolve_labels(std::span<const AnnotationRecord> records, int raters_per_video) {
  std::vector<DatasetLabel> out;
  for (const auto& [video, recs] : group_by_video(records)) {
    std::set<std::string> raters;
    for (const auto* r : recs) raters.insert(r->rater_id);
    if (static_cast<int>(recs.size()) != raters_per_video || static_cast<int>(raters.size()) != raters_per_video) {
      throw Error(ErrorCode::IncompleteRatings, video + " has " + std::to_string(recs.size()) + " ratings from " +
                                                    std::to_string(raters.size()) + " raters");
    }
    std::array<int, kLabelCount> votes{};
    for (const auto* r : recs) ++votes[static_cast<int>(r->label)];
    const auto best = std::max_element(votes.begin(), votes.end());
    DatasetLabel dl{video, std::nullopt, LabelStatus::Dropped};
    if (*best >= 2) {
      dl.label = static_cast<Label>(best - votes.begin());
      if (*dl.label != Label::Uncertain) dl.status = LabelStatus::Valid;
    }
    out.push_back(std::move(dl));
  }
  return out;
}

RatingMatrix rating_matrix(std::span<const AnnotationRecord> records, const std::vector<std::string>* only_videos) {
  auto grouped = group_by_video(records);
  if (only_videos != nullptr) {
    const std::set<std::string> keep(only_videos->begin(), only_videos->end());
    std::erase_if(grouped, [&](const auto& kv) { return !keep.contains(kv.first); });
  }
  RatingMatrix m(grouped.size(), kLabelCount);
  std::size_t i = 0;
  for (const auto& [video, recs] : grouped) {
    for (const auto* r : recs) ++m.at(i, static_cast<std::size_t>(r->label));
    ++i;
  }
  return m;
}

double fleiss_kappa(const RatingMatrix& m) {
  const auto N = m.items();
  const auto k = m.categories();
  const int n = m.raters();
  if (N == 0 || k == 0) throw Error(ErrorCode::InvariantViolation, "empty rating matrix");
  if (n < 2) throw Error(ErrorCode::InvariantViolation, "Fleiss' kappa needs at least two raters per item");

  const double nn = n;
  double p_bar = 0.0;
  std::vector<double> category_total(k, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    double agree = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double c = m.at(i, j);
      agree += c * (c - 1.0);
      category_total[j] += c;
    }
    p_bar += agree / (nn * (nn - 1.0));
  }
  p_bar /= static_cast<double>(N);

  double p_e = 0.0;
  for (double total : category_total) {
    const double p = total / (static_cast<double>(N) * nn);
    p_e += p * p;
  }
  if (p_e >= 1.0) {
    if (p_bar >= 1.0) return 1.0;
    throw Error(ErrorCode::DegenerateExpectation, "expected agreement is 1");
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

double cohen_kappa(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorCode::InvariantViolation, "Cohen's kappa needs two non-empty sequences of equal length");
  }
  std::map<int, double> freq_a, freq_b;
  double observed = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    observed += a[i] == b[i] ? 1.0 : 0.0;
    freq_a[a[i]] += 1.0;
    freq_b[b[i]] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const double p_o = observed / n;
  double p_e = 0.0;
  for (const auto& [cat, count] : freq_a) {
    if (auto it = freq_b.find(cat); it != freq_b.end()) p_e += (count / n) * (it->second / n);
  }
  if (p_e >= 1.0) {
    // a single shared category: p_o is necessarily 1 too
    if (p_o >= 1.0) return 1.0;
    throw Error(ErrorCode::DegenerateExpectation, "expected agreement is 1");
  }
  return (p_o - p_e) / (1.0 - p_e);
}

int duration_bin(double duration_s) {
  if (duration_s < 60.0) return 0;
  if (duration_s < 90.0) return 1;
  if (duration_s < 120.0) return 2;
  if (duration_s < 150.0) return 3;
  return 4;
}

StatsReport dataset_stats(std::span<const DatasetLabel> labels, std::span<const VideoMetadata> metadata,
                          std::span<const AnnotationRecord> raw_records) {
  StatsReport report;
  for (int l = 0; l < kLabelCount; ++l) report.label_counts[to_string(static_cast<Label>(l))] = 0;
  report.status_counts["valid"] = 0;
  report.status_counts["dropped"] = 0;

  std::set<std::string> valid;
  for (const auto& dl : labels) {
    ++report.status_counts[dl.status == LabelStatus::Valid ? "valid" : "dropped"];
    if (dl.status == LabelStatus::Valid) {
      valid.insert(dl.video_id);
      if (raw_records.empty() && dl.label) ++report.label_counts[to_string(*dl.label)];
    }
  }
  for (const auto& r : raw_records) {
    if (valid.contains(r.video_id)) ++report.label_counts[to_string(r.label)];
  }
  for (const auto& meta : metadata) {
    if (!valid.contains(meta.video_id)) continue;
    ++report.duration_bins[static_cast<std::size_t>(duration_bin(meta.duration_s))];
    if (!meta.language.empty()) ++report.language_counts[meta.language];
    if (!meta.poster.empty()) ++report.poster_counts[meta.poster];
  }
  return report;
}

nlohmann::json StatsReport::to_json() const {
  static const std::array<const char*, 5> kBinNames = {"<60", "60-90", "90-120", "120-150", ">=150"};
  nlohmann::json bins = nlohmann::json::object();
  for (std::size_t i = 0; i < duration_bins.size(); ++i) bins[kBinNames[i]] = duration_bins[i];
  return {{"label_counts", label_counts},       {"status_counts", status_counts},
          {"duration_bins_s", bins},            {"language_counts", language_counts},
          {"poster_counts", poster_counts}};
}

}  // namespace mseva::annotation
