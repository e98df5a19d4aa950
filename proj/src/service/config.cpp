#include "mseva/service/config.hpp"

#include <cstdlib>
#include <set>

#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"
#include "toml.hpp"

namespace mseva::service {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

void only_keys(const toml::table& t, const std::string& section, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : t) {
    if (!allowed.contains(std::string(k.str()))) bad("unknown key [" + section + "]." + std::string(k.str()));
  }
}

template <typename T>
void read(const toml::table& t, const char* key, T& out) {
  const auto* node = t.get(key);
  if (node == nullptr) return;
  if constexpr (std::is_same_v<T, bool>) {
    if (!node->is_boolean()) bad(std::string(key) + " must be a boolean");
    out = node->as_boolean()->get();
  } else if constexpr (std::is_integral_v<T>) {
    if (!node->is_integer()) bad(std::string(key) + " must be an integer");
    out = static_cast<T>(node->as_integer()->get());
  } else if constexpr (std::is_floating_point_v<T>) {
    if (const auto v = node->value<double>()) out = *v;
    else bad(std::string(key) + " must be a number");
  } else {
    if (!node->is_string()) bad(std::string(key) + " must be a string");
    out = T(node->as_string()->get());
  }
}

template <typename T>
void read_opt(const toml::table& t, const char* key, std::optional<T>& out) {
  if (t.contains(key)) {
    T v{};
    read(t, key, v);
    out = v;
  }
}

std::vector<std::string> string_list(const toml::table& t, const char* key, std::vector<std::string> fallback) {
  const auto* node = t.get(key);
  if (node == nullptr) return fallback;
  const auto* arr = node->as_array();
  if (arr == nullptr) bad(std::string(key) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *arr) {
    if (!e.is_string()) bad(std::string(key) + " must be an array of strings");
    out.push_back(e.as_string()->get());
  }
  return out;
}

media::IntRange int_range(const toml::table& t, const char* key) {
  const auto* arr = t.get_as<toml::array>(key);
  if (arr == nullptr || arr->size() != 2 || !(*arr)[0].is_integer() || !(*arr)[1].is_integer()) {
    bad(std::string("resolution_rule.") + key + " must be [min, max]");
  }
  return {static_cast<int>((*arr)[0].as_integer()->get()), static_cast<int>((*arr)[1].as_integer()->get())};
}

void read_media(const toml::table& t, MediaSection& m) {
  only_keys(t, "media", {"frame_interval_ms", "face_cascade", "face_fallback_to_center", "language_hint", "resolution_rule"});
  read(t, "frame_interval_ms", m.frame_interval_ms);
  std::string cascade;
  read(t, "face_cascade", cascade);
  if (!cascade.empty()) m.face_cascade = cascade;
  read(t, "face_fallback_to_center", m.face_fallback_to_center);
  read_opt(t, "language_hint", m.language_hint);
  if (const auto* rules = t.get_as<toml::array>("resolution_rule")) {
    m.rules.clear();
    for (const auto& node : *rules) {
      const auto* r = node.as_table();
      if (r == nullptr) bad("[[media.resolution_rule]] entries must be tables");
      only_keys(*r, "media.resolution_rule", {"src_w", "src_h", "dst_w", "dst_h"});
      media::ResolutionRule rule;
      rule.src_width = int_range(*r, "src_w");
      rule.src_height = int_range(*r, "src_h");
      read(*r, "dst_w", rule.dst_width);
      read(*r, "dst_h", rule.dst_height);
      m.rules.push_back(rule);
    }
  }
}

void read_segmenter(const toml::table& t, segmenter::SilenceProfile& s) {
  only_keys(t, "segmenter", {"min_silence_ms", "silence_floor_db", "window_ms", "min_segment_ms", "max_segment_ms"});
  read(t, "min_silence_ms", s.min_silence_ms);
  read(t, "silence_floor_db", s.silence_floor_db);
  read(t, "window_ms", s.window_ms);
  read(t, "min_segment_ms", s.min_segment_ms);
  read(t, "max_segment_ms", s.max_segment_ms);
}

void read_asr(const toml::table& t, AsrSection& a) {
  only_keys(t, "asr", {"backend", "task", "max_workers"});
  read(t, "backend", a.backend);
  read_opt(t, "task", a.task);
  read(t, "max_workers", a.max_workers);
}

void read_model(const toml::table& t, ModelSection& m) {
  only_keys(t, "model", {"checkpoint", "text_backend", "class_names", "positive_classes", "visual_feature_dim",
                         "acoustic_feature_dim", "text_feature_dim", "encoder_layers", "encoder_heads",
                         "ffn_multiplier", "head_hidden", "conv1_channels", "conv2_channels", "acoustic_frame_hidden",
                         "mel_bins", "audio_patches", "text_embedding_dim", "max_faces_per_segment",
                         "fusion_weights", "learn_fusion_weights", "aux_loss_weight", "seed"});
  std::string ckpt;
  read(t, "checkpoint", ckpt);
  if (!ckpt.empty()) m.checkpoint = ckpt;
  read(t, "text_backend", m.text_backend);
  auto& c = m.config;
  c.class_names = string_list(t, "class_names", c.class_names);
  c.positive_classes = string_list(t, "positive_classes", c.positive_classes);
  read(t, "visual_feature_dim", c.visual_feature_dim);
  read(t, "acoustic_feature_dim", c.acoustic_feature_dim);
  read(t, "text_feature_dim", c.text_feature_dim);
  read(t, "encoder_layers", c.encoder_layers);
  read(t, "encoder_heads", c.encoder_heads);
  read(t, "ffn_multiplier", c.ffn_multiplier);
  read(t, "head_hidden", c.head_hidden);
  read(t, "conv1_channels", c.conv1_channels);
  read(t, "conv2_channels", c.conv2_channels);
  read(t, "acoustic_frame_hidden", c.acoustic_frame_hidden);
  read(t, "mel_bins", c.mel_bins);
  read(t, "audio_patches", c.audio_patches);
  read(t, "text_embedding_dim", c.text_embedding_dim);
  read(t, "max_faces_per_segment", c.max_faces_per_segment);
  if (const auto* w = t.get_as<toml::array>("fusion_weights")) {
    if (w->size() != 3) bad("fusion_weights must have three entries (visual, acoustic, textual)");
    for (std::size_t i = 0; i < 3; ++i) {
      const auto v = (*w)[i].value<double>();
      if (!v) bad("fusion_weights must be numbers");
      c.fusion_weights[i] = *v;
    }
  }
  read(t, "learn_fusion_weights", c.learn_fusion_weights);
  read(t, "aux_loss_weight", c.aux_loss_weight);
  std::int64_t seed = static_cast<std::int64_t>(c.seed);
  read(t, "seed", seed);
  c.seed = static_cast<std::uint64_t>(seed);
}

void read_service(const toml::table& t, ServiceSection& s) {
  only_keys(t, "service", {"data_dir", "workers", "max_upload_bytes", "max_duration_ms", "host", "port"});
  std::string dir;
  read(t, "data_dir", dir);
  if (!dir.empty()) s.data_dir = dir;
  read(t, "workers", s.workers);
  read(t, "max_upload_bytes", s.max_upload_bytes);
  read(t, "max_duration_ms", s.max_duration_ms);
  read(t, "host", s.host);
  read(t, "port", s.port);
}

}  // namespace

void AppConfig::validate() const {
  media::validate_rules(media.rules);
  if (media.frame_interval_ms <= 0) bad("media.frame_interval_ms must be positive");
  segmenter.validate();
  if (asr.max_workers <= 0) bad("asr.max_workers must be positive");
  model.config.validate();
  if (service.workers <= 0) bad("service.workers must be positive");
  if (service.max_upload_bytes <= 0 || service.max_duration_ms <= 0) bad("service limits must be positive");
}

AppConfig parse_config(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    bad(std::string("config: ") + std::string(e.description()));
  }
  only_keys(root, "", {"media", "segmenter", "asr", "model", "service"});
  AppConfig cfg;
  auto section = [&root](const char* name) -> const toml::table* {
    const auto* node = root.get(name);
    if (node != nullptr && !node->is_table()) bad(std::string("[") + name + "] must be a table");
    return node != nullptr ? node->as_table() : nullptr;
  };
  if (const auto* t = section("media")) read_media(*t, cfg.media);
  if (const auto* t = section("segmenter")) read_segmenter(*t, cfg.segmenter);
  if (const auto* t = section("asr")) read_asr(*t, cfg.asr);
  if (const auto* t = section("model")) read_model(*t, cfg.model);
  if (const auto* t = section("service")) read_service(*t, cfg.service);
  cfg.validate();
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  auto cfg = parse_config(read_file(path));
  // relative paths in the file are relative to the file
  const auto base = path.parent_path();
  if (!cfg.model.checkpoint.empty() && cfg.model.checkpoint.is_relative()) cfg.model.checkpoint = base / cfg.model.checkpoint;
  if (!cfg.media.face_cascade.empty() && cfg.media.face_cascade.is_relative()) cfg.media.face_cascade = base / cfg.media.face_cascade;
  if (cfg.service.data_dir.is_relative()) cfg.service.data_dir = base / cfg.service.data_dir;
  return cfg;
}

void apply_environment(AppConfig& cfg) {
  if (const char* dir = std::getenv("MSEVA_DATA_DIR"); dir != nullptr && *dir != '\0') cfg.service.data_dir = dir;
}

}  // namespace mseva::service
