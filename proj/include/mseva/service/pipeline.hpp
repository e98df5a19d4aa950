#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mseva/media/faces.hpp"
#include "mseva/media/normalize.hpp"
#include "mseva/model/emotion_model.hpp"
#include "mseva/segmenter/segmenter.hpp"
#include "mseva/service/config.hpp"
#include "mseva/transcriber/transcriber.hpp"

namespace mseva::service {

struct TrackPoint {
  segmenter::UtteranceSegment segment;
  model::FusedPrediction prediction;
};

struct AnalysisResult {
  std::string job_id;
  std::string asset_id;
  model::FusedPrediction video_verdict;
  std::vector<TrackPoint> track;  // ordered by start_ms
  std::array<model::ModalityPrediction, model::kModalityCount> per_modality_video;
};

/// Sorted-key JSON; contains no timestamps, so identical inputs serialize
/// identically.
nlohmann::json to_json(const AnalysisResult& r, const model::ModelConfig& cfg);
std::string serialize_result(const AnalysisResult& r, const model::ModelConfig& cfg);
nlohmann::json track_json(const nlohmann::json& result);
nlohmann::json modalities_json(const nlohmann::json& result);

/// Shared, read-only collaborators of the pipeline.
struct PipelineContext {
  AppConfig config;
  std::shared_ptr<const model::EmotionModel> model;
  std::shared_ptr<const transcriber::AsrBackend> asr;
  std::shared_ptr<const model::TextBackend> text;
  std::shared_ptr<const media::FaceDetector> faces;
  std::function<std::unique_ptr<media::Transcoder>()> make_transcoder = media::make_default_transcoder;
};

/// Builds the context from config: loads the checkpoint (or initializes
/// from the seed), the ASR and text backends and the face detector.
PipelineContext make_context(const AppConfig& config);

enum class Stage { Preprocessing, Segmenting, Transcribing, Inferring };
std::string to_string(Stage s);

/// media-prep -> segmenter -> transcriber -> per-segment inference ->
/// duration-weighted aggregation. `on_stage` runs on entry to each stage.
/// Failures are rethrown as Error with the stage name prefixed to the
/// message; `failed_stage` (if given) receives the stage.
AnalysisResult run_pipeline(const std::string& job_id, const std::filesystem::path& source,
                            const std::filesystem::path& work_dir, const PipelineContext& ctx,
                            const std::function<void(Stage)>& on_stage = {}, Stage* failed_stage = nullptr);

}  // namespace mseva::service
