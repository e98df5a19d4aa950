#include "mseva/service/pipeline.hpp"

#include <algorithm>

#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"
#include "mseva/common/wav.hpp"
#include "mseva/media/frames.hpp"

namespace mseva::service {

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Preprocessing: return "preprocessing";
    case Stage::Segmenting: return "segmenting";
    case Stage::Transcribing: return "transcribing";
    case Stage::Inferring: return "inferring";
  }
  return "unknown";
}

namespace {

nlohmann::json point_json(const TrackPoint& p, const model::ModelConfig& cfg) {
  auto j = model::to_json(p.prediction, cfg);
  j["index"] = p.segment.index;
  j["start_ms"] = p.segment.start_ms;
  j["end_ms"] = p.segment.end_ms;
  j["text"] = p.segment.text;
  return j;
}

}  // namespace

nlohmann::json to_json(const AnalysisResult& r, const model::ModelConfig& cfg) {
  nlohmann::json track = nlohmann::json::array();
  for (const auto& p : r.track) track.push_back(point_json(p, cfg));
  nlohmann::json per = nlohmann::json::object();
  for (const auto& m : r.per_modality_video) per[model::to_string(m.modality)] = model::to_json(m, cfg);
  return {{"job_id", r.job_id},
          {"asset_id", r.asset_id},
          {"classes", cfg.class_names},
          {"video_verdict", model::to_json(r.video_verdict, cfg)},
          {"track", track},
          {"per_modality_video", per}};
}

std::string serialize_result(const AnalysisResult& r, const model::ModelConfig& cfg) {
  return to_json(r, cfg).dump(2) + "\n";
}

nlohmann::json track_json(const nlohmann::json& result) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : result.at("track")) {
    points.push_back({{"start_ms", p.at("start_ms")},
                      {"end_ms", p.at("end_ms")},
                      {"text", p.at("text")},
                      {"logits", p.at("logits")},
                      {"probabilities", p.at("probabilities")},
                      {"label", p.at("emotion")},
                      {"sentiment", p.at("sentiment")},
                      {"positive_probability", p.at("positive_probability")}});
  }
  return {{"job_id", result.at("job_id")}, {"points", points}};
}

nlohmann::json modalities_json(const nlohmann::json& result) {
  nlohmann::json per_segment = nlohmann::json::array();
  for (const auto& p : result.at("track")) {
    per_segment.push_back({{"start_ms", p.at("start_ms")}, {"end_ms", p.at("end_ms")}, {"modalities", p.at("modalities")}});
  }
  return {{"job_id", result.at("job_id")},
          {"video", result.at("per_modality_video")},
          {"fusion_weights", result.at("video_verdict").at("fusion_weights")},
          {"segments", per_segment}};
}

PipelineContext make_context(const AppConfig& config) {
  PipelineContext ctx;
  ctx.config = config;
  ctx.model = config.model.checkpoint.empty()
                  ? std::make_shared<const model::EmotionModel>(config.model.config)
                  : std::make_shared<const model::EmotionModel>(model::EmotionModel::load(config.model.checkpoint));
  ctx.asr = transcriber::make_asr_backend(config.asr.backend);
  ctx.text = model::make_text_backend(config.model.text_backend, ctx.model->config().text_embedding_dim);
  ctx.faces = media::make_face_detector(
      config.media.face_cascade.empty() ? media::default_cascade_path() : config.media.face_cascade,
      config.media.face_fallback_to_center);
  return ctx;
}

AnalysisResult run_pipeline(const std::string& job_id, const std::filesystem::path& source,
                            const std::filesystem::path& work_dir, const PipelineContext& ctx,
                            const std::function<void(Stage)>& on_stage, Stage* failed_stage) {
  if (!ctx.model) throw Error(ErrorCode::ModelNotLoaded, "pipeline has no model");
  const auto& cfg = ctx.config;
  Stage stage = Stage::Preprocessing;
  auto enter = [&](Stage s) {
    stage = s;
    if (on_stage) on_stage(s);
  };

  try {
    enter(Stage::Preprocessing);
    std::filesystem::create_directories(work_dir);
    auto transcoder = ctx.make_transcoder();
    const auto asset = media::normalize_container(source, work_dir, cfg.media.rules, *transcoder, cfg.media.language_hint);
    const auto frames = media::extract_frames(asset, media::FixedInterval{cfg.media.frame_interval_ms});
    const auto crops = media::detect_faces(frames, *ctx.faces);

    enter(Stage::Segmenting);
    const AudioBuffer audio = read_wav(asset.audio_path);
    const auto segments = segmenter::segment_audio(audio, cfg.segmenter);
    if (segments.empty()) throw Error(ErrorCode::EmptyTrack, "no speech segments found");
    const auto clips = segmenter::cut_audio(audio, segments);

    enter(Stage::Transcribing);
    const auto task = cfg.asr.task ? transcriber::parse_task(*cfg.asr.task) : transcriber::default_task(asset.language_hint);
    auto transcript = transcriber::transcribe_segments(clips, segments, *ctx.asr, task, asset.language_hint, cfg.asr.max_workers);
    transcript.asset_id = asset.asset_id;
    transcriber::write_transcript(transcript, work_dir / "transcript.jsonl");

    enter(Stage::Inferring);
    const auto& mcfg = ctx.model->config();
    AnalysisResult result;
    result.job_id = job_id;
    result.asset_id = asset.asset_id;
    std::vector<model::FusedPrediction> preds;
    std::vector<std::int64_t> durations;
    for (std::size_t i = 0; i < transcript.segments.size(); ++i) {
      const auto& seg = transcript.segments[i];
      model::SegmentInputs in;
      for (const auto& c : crops) {
        if (c.frame_timestamp_ms >= seg.start_ms && c.frame_timestamp_ms < seg.end_ms &&
            static_cast<int>(in.faces.size()) < mcfg.max_faces_per_segment) {
          in.faces.push_back(c.crop);
        }
      }
      in.audio = clips[i];
      in.text = seg.text;
      auto pred = model::infer_segment(ctx.model, in, *ctx.text);
      preds.push_back(pred);
      durations.push_back(seg.duration_ms());
      result.track.push_back({seg, std::move(pred)});
    }
    result.video_verdict = model::aggregate_video(preds, durations, mcfg);
    result.per_modality_video = result.video_verdict.per_modality;
    return result;
  } catch (const Error& e) {
    if (failed_stage != nullptr) *failed_stage = stage;
    throw Error(e.code(), to_string(stage) + ": " + e.detail());
  } catch (const std::exception& e) {
    if (failed_stage != nullptr) *failed_stage = stage;
    throw Error(ErrorCode::InvariantViolation, to_string(stage) + ": " + e.what());
  }
}

}  // namespace mseva::service
