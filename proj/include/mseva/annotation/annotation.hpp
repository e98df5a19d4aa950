#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mseva::annotation {

enum class Label { Positive, Negative, Uncertain };
inline constexpr int kLabelCount = 3;

std::string to_string(Label label);
Label parse_label(const std::string& text);

struct AnnotationRecord {
  std::string video_id;
  std::string rater_id;
  Label label = Label::Uncertain;
};

enum class LabelStatus { Valid, Dropped };

struct DatasetLabel {
  std::string video_id;
  std::optional<Label> label;  // majority label; empty when no label reached two votes
  LabelStatus status = LabelStatus::Dropped;
};

/// items x categories vote counts; every row sums to the same rater count.
class RatingMatrix {
 public:
  RatingMatrix(std::size_t items, std::size_t categories);
  /// Throws Error{InvariantViolation} on ragged rows, negative counts or unequal row sums.
  static RatingMatrix from_rows(const std::vector<std::vector<int>>& rows);

  std::size_t items() const { return items_; }
  std::size_t categories() const { return categories_; }
  int& at(std::size_t item, std::size_t category) { return counts_[item * categories_ + category]; }
  int at(std::size_t item, std::size_t category) const { return counts_[item * categories_ + category]; }
  /// Raters per item; throws Error{InvariantViolation} if rows disagree.
  int raters() const;

 private:
  std::size_t items_;
  std::size_t categories_;
  std::vector<int> counts_;
};

/// CSV with header video_id,rater_id,label.
std::vector<AnnotationRecord> read_ratings_csv(const std::filesystem::path& path);
std::vector<AnnotationRecord> parse_ratings_csv(const std::string& contents);

/// Majority vote over exactly `raters_per_video` ratings per video. A video is
/// valid when one label has at least two votes and that label is not
/// uncertain. Output is ordered by video_id. Throws Error{IncompleteRatings}.
std::vector<DatasetLabel> resolve_labels(std::span<const AnnotationRecord> records, int raters_per_video = 3);

/// Rating matrix over {positive, negative, uncertain}, rows ordered by video_id.
/// When `only_videos` is given, rows are restricted to those ids.
RatingMatrix rating_matrix(std::span<const AnnotationRecord> records,
                           const std::vector<std::string>* only_videos = nullptr);

/// Fleiss' kappa (P_bar - P_e) / (1 - P_e). When P_e == 1 the value is 1 if
/// agreement is also perfect; otherwise Error{DegenerateExpectation}.
double fleiss_kappa(const RatingMatrix& m);

/// Cohen's kappa between two equally long label sequences (category ids).
/// p_e == 1 with p_o == 1 yields 1. Throws Error{InvariantViolation} on a
/// length mismatch or empty input.
double cohen_kappa(std::span<const int> a, std::span<const int> b);

struct VideoMetadata {
  std::string video_id;
  double duration_s = 0.0;
  std::string language;
  std::string poster;
};

struct StatsReport {
  std::map<std::string, std::int64_t> label_counts;    // per label value
  std::map<std::string, std::int64_t> status_counts;   // valid / dropped
  std::array<std::int64_t, 5> duration_bins{};          // <60, 60-90, 90-120, 120-150, >=150 s
  std::map<std::string, std::int64_t> language_counts;
  std::map<std::string, std::int64_t> poster_counts;

  nlohmann::json to_json() const;
};

/// Duration/language/poster counts cover valid videos only; label counts tally
/// raw votes when records are supplied, resolved labels otherwise.
StatsReport dataset_stats(std::span<const DatasetLabel> labels, std::span<const VideoMetadata> metadata,
                          std::span<const AnnotationRecord> raw_records = {});

int duration_bin(double duration_s);

}  // namespace mseva::annotation
