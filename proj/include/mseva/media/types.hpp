#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <opencv2/core.hpp>

namespace mseva::media {

struct Rational {
  int num = 0;
  int den = 1;
  double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / den; }
  bool operator==(const Rational&) const = default;
};

struct IntRange {
  int min = 0;
  int max = 0;
  bool contains(int v) const { return v >= min && v <= max; }
  bool operator==(const IntRange&) const = default;
};

struct ResolutionRule {
  IntRange src_width;
  IntRange src_height;
  int dst_width = 0;
  int dst_height = 0;
  bool fallback = false;  // synthesized for inputs outside every configured range

  bool operator==(const ResolutionRule&) const = default;
};

/// A registered short video plus its normalized derivatives.
struct MediaAsset {
  std::string asset_id;
  std::filesystem::path source_path;
  std::filesystem::path audio_path;  // mono, 16 kHz, s16le wav
  std::filesystem::path video_path;  // frame-accessible, already at target resolution
  std::int64_t duration_ms = 0;
  int width_px = 0;
  int height_px = 0;
  Rational fps;
  ResolutionRule rule;
  std::optional<std::string> language_hint;
};

struct FixedCount {
  int count = 10;
};
struct FixedInterval {
  std::int64_t interval_ms = 500;
};
using FramePolicy = std::variant<FixedCount, FixedInterval>;

struct FrameBatch {
  std::string asset_id;
  std::vector<std::int64_t> timestamps_ms;
  std::vector<cv::Mat> frames;  // CV_8UC3, RGB order
};

inline constexpr int kFaceCropSize = 48;

struct FaceCrop {
  std::int64_t frame_timestamp_ms = 0;
  cv::Rect bbox;
  cv::Mat crop;  // CV_8UC1, 48x48
};

}  // namespace mseva::media
