#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mseva/media/resolution.hpp"
#include "mseva/model/emotion_model.hpp"
#include "mseva/segmenter/segmenter.hpp"

namespace mseva::service {

struct MediaSection {
  std::vector<media::ResolutionRule> rules = media::default_resolution_rules();
  std::int64_t frame_interval_ms = 500;
  std::filesystem::path face_cascade;  // empty: default cascade
  bool face_fallback_to_center = false;
  std::optional<std::string> language_hint;
};

struct AsrSection {
  std::string backend = "echo";  // "echo" or "command:<path>"
  std::optional<std::string> task;  // "recognize" / "translate"; default from language hint
  int max_workers = 1;
};

struct ModelSection {
  model::ModelConfig config;
  std::filesystem::path checkpoint;  // empty: freshly initialized from config.seed
  std::string text_backend = "hash";
};

struct ServiceSection {
  std::filesystem::path data_dir = "mseva-data";
  int workers = 1;
  std::int64_t max_upload_bytes = 512LL * 1024 * 1024;
  std::int64_t max_duration_ms = 3 * 60 * 1000;
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct AppConfig {
  MediaSection media;
  segmenter::SilenceProfile segmenter;
  AsrSection asr;
  ModelSection model;
  ServiceSection service;

  /// Throws Error{InvalidConfig}.
  void validate() const;
};

/// Parses a TOML file with [media], [segmenter], [asr], [model] and
/// [service] sections; unknown keys are rejected. Throws Error{InvalidConfig}.
AppConfig parse_config(const std::string& text);
AppConfig load_config(const std::filesystem::path& path);

/// MSEVA_DATA_DIR overrides service.data_dir.
void apply_environment(AppConfig& cfg);

}  // namespace mseva::service
