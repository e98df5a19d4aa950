// mseva: command-line front end for the analysis pipeline and its parts.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include <opencv2/imgcodecs.hpp>

#include "CLI11.hpp"
#include "json.hpp"
#include "mseva/annotation/annotation.hpp"
#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"
#include "mseva/common/wav.hpp"
#include "mseva/eval/ablation.hpp"
#include "mseva/eval/metrics.hpp"
#include "mseva/model/emotion_model.hpp"
#include "mseva/segmenter/segmenter.hpp"
#include "mseva/service/config.hpp"
#include "mseva/service/pipeline.hpp"
#include "mseva/service/service.hpp"
#include "mseva/transcriber/transcriber.hpp"
#include "toml.hpp"

namespace fs = std::filesystem;
using namespace mseva;
using nlohmann::json;

namespace {

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_file_atomic(out_path, text);
  }
}

service::AppConfig load_app_config(const std::string& path) {
  service::AppConfig cfg = path.empty() ? service::AppConfig{} : service::load_config(path);
  service::apply_environment(cfg);
  return cfg;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<json> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedLine, path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<cv::Mat> read_faces(const fs::path& base, const json& item) {
  std::vector<cv::Mat> faces;
  if (!item.contains("faces")) return faces;
  for (const auto& f : item.at("faces")) {
    const auto path = base / f.get<std::string>();
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw Error(ErrorCode::IoFailure, "cannot read face image " + path.string());
    faces.push_back(img);
  }
  return faces;
}

int parse_class(const json& v, const model::ModelConfig& cfg) {
  if (v.is_number_integer()) return v.get<int>();
  const auto name = v.get<std::string>();
  for (int i = 0; i < cfg.num_classes(); ++i) {
    if (cfg.class_names[static_cast<std::size_t>(i)] == name) return i;
  }
  throw Error(ErrorCode::LabelOutOfRange, "unknown class '" + name + "'");
}

// ---------------------------------------------------------------- subcommands

int cmd_segment(const std::string& wav, const std::string& config, std::optional<std::int64_t> min_silence,
                std::optional<double> floor_db, const std::string& out) {
  auto profile = load_app_config(config).segmenter;
  if (min_silence) profile.min_silence_ms = *min_silence;
  if (floor_db) profile.silence_floor_db = *floor_db;
  profile.validate();
  const auto segments = segmenter::segment_audio(read_wav(wav), profile);
  emit(out, transcriber::serialize_transcript(segments));
  return 0;
}

int cmd_transcribe(const std::string& wav, const std::string& segments_path, const std::string& backend,
                   const std::string& task, const std::string& language, int workers, const std::string& out) {
  const auto audio = read_wav(wav);
  const auto segments = transcriber::parse_transcript(read_file(segments_path));
  const auto clips = segmenter::cut_audio(audio, segments);
  const auto asr = transcriber::make_asr_backend(backend);
  const std::optional<std::string> hint = language.empty() ? std::nullopt : std::optional(language);
  const auto t = task.empty() ? transcriber::default_task(hint) : transcriber::parse_task(task);
  const auto transcript = transcriber::transcribe_segments(clips, segments, *asr, t, hint, workers);
  emit(out, transcriber::serialize_transcript(transcript.segments));
  return 0;
}

int cmd_train(const std::string& config, const std::string& data_dir, const std::string& out,
              const model::TrainSchedule& schedule) {
  const auto cfg = load_app_config(config);
  const fs::path base(data_dir);
  std::vector<model::TrainingExample> data;
  for (const auto& item : read_jsonl(base / "manifest.jsonl")) {
    model::TrainingExample ex;
    ex.label = parse_class(item.at("label"), cfg.model.config);
    ex.inputs.audio = read_wav(base / item.at("audio").get<std::string>());
    ex.inputs.faces = read_faces(base, item);
    ex.inputs.text = item.value("text", "");
    data.push_back(std::move(ex));
  }
  model::EmotionModel m = cfg.model.checkpoint.empty() ? model::EmotionModel(cfg.model.config)
                                                       : model::EmotionModel::load(cfg.model.checkpoint);
  const auto text = model::make_text_backend(cfg.model.text_backend, m.config().text_embedding_dim);
  const auto report = model::train(m, data, *text, schedule);
  m.save(out);
  json history = json::array();
  for (const auto& e : report.epochs) history.push_back({{"mean_loss", e.mean_loss}, {"accuracy", e.accuracy}});
  std::cout << json{{"steps", report.steps},
                    {"updates", report.updates},
                    {"epochs", history},
                    {"train_accuracy", model::accuracy(m, data, *text)},
                    {"checkpoint", out}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_analyze(const std::string& video, const std::string& config, const std::string& ckpt, const std::string& out) {
  auto cfg = load_app_config(config);
  if (!ckpt.empty()) cfg.model.checkpoint = ckpt;
  const auto ctx = service::make_context(cfg);
  const std::string job_id = "analyze-" + sha256_file_hex(video).substr(0, 16);
  const auto work = fs::temp_directory_path() / ("mseva-" + job_id + "-" + std::to_string(::getpid()));
  try {
    const auto result = service::run_pipeline(job_id, video, work, ctx);
    fs::remove_all(work);
    emit(out, service::serialize_result(result, ctx.model->config()));
  } catch (...) {
    fs::remove_all(work);
    throw;
  }
  return 0;
}

int cmd_kappa(const std::string& ratings, const std::string& mode, const std::string& raters, bool valid_only) {
  auto records = annotation::read_ratings_csv(ratings);
  if (valid_only) {
    std::set<std::string> valid;
    for (const auto& l : annotation::resolve_labels(records)) {
      if (l.status == annotation::LabelStatus::Valid) valid.insert(l.video_id);
    }
    std::erase_if(records, [&](const auto& r) { return !valid.contains(r.video_id); });
  }
  double kappa = 0.0;
  if (mode == "fleiss") {
    kappa = annotation::fleiss_kappa(annotation::rating_matrix(records));
  } else if (mode == "cohen") {
    const auto comma = raters.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--raters a,b is required for cohen");
    const std::string ra = raters.substr(0, comma);
    const std::string rb = raters.substr(comma + 1);
    std::map<std::string, std::pair<int, int>> by_video;
    for (const auto& r : records) {
      auto& slot = by_video.try_emplace(r.video_id, -1, -1).first->second;
      if (r.rater_id == ra) slot.first = static_cast<int>(r.label);
      if (r.rater_id == rb) slot.second = static_cast<int>(r.label);
    }
    std::vector<int> a;
    std::vector<int> b;
    for (const auto& [id, pair] : by_video) {
      if (pair.first >= 0 && pair.second >= 0) {
        a.push_back(pair.first);
        b.push_back(pair.second);
      }
    }
    kappa = annotation::cohen_kappa(a, b);
  } else {
    throw Error(ErrorCode::InvalidConfig, "--mode must be fleiss or cohen");
  }
  std::cout << json{{"mode", mode}, {"kappa", kappa}}.dump() << "\n";
  return 0;
}

int cmd_labels(const std::string& ratings, int raters, const std::string& out) {
  const auto records = annotation::read_ratings_csv(ratings);
  std::string text;
  for (const auto& l : annotation::resolve_labels(records, raters)) {
    text += json{{"video_id", l.video_id},
                 {"label", l.label ? json(annotation::to_string(*l.label)) : json(nullptr)},
                 {"status", l.status == annotation::LabelStatus::Valid ? "valid" : "dropped"}}
                .dump() +
            "\n";
  }
  emit(out, text);
  return 0;
}

int cmd_stats(const std::string& ratings, const std::string& metadata, int raters, const std::string& out) {
  const auto records = annotation::read_ratings_csv(ratings);
  const auto labels = annotation::resolve_labels(records, raters);
  std::vector<annotation::VideoMetadata> meta;
  if (!metadata.empty()) {
    for (const auto& j : read_jsonl(metadata)) {
      meta.push_back({j.at("video_id").get<std::string>(), j.value("duration_s", 0.0), j.value("language", ""),
                      j.value("poster", "")});
    }
  }
  emit(out, annotation::dataset_stats(labels, meta, records).to_json().dump(2) + "\n");
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gold, bool macro, const std::string& out) {
  const auto p = eval::parse_prediction_lines(read_file(pred), true);
  const auto g = eval::parse_prediction_lines(read_file(gold), false);
  const auto report =
      eval::evaluate_predictions(p, g, macro ? eval::F1Convention::Macro : eval::F1Convention::PositiveClass);
  emit(out, report.to_json().dump(2) + "\n");
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out) {
  toml::table t;
  try {
    t = toml::parse_file(config_path);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string(e.description()));
  }
  const fs::path base = fs::path(config_path).parent_path();
  const auto baseline = eval::parse_text_source(t["baseline"].value_or(std::string("title")));
  std::vector<eval::TextSource> experiments;
  if (const auto* arr = t["experiments"].as_array()) {
    for (const auto& e : *arr) experiments.push_back(eval::parse_text_source(e.value_or(std::string())));
  }
  const auto dataset_path = base / t["dataset"].value_or(std::string("items.jsonl"));
  const auto convention = t["convention"].value_or(std::string("positive-class")) == "macro"
                              ? eval::F1Convention::Macro
                              : eval::F1Convention::PositiveClass;
  service::AppConfig app = load_app_config(t["config"].value_or(std::string()).empty()
                                               ? std::string()
                                               : (base / t["config"].value_or(std::string())).string());
  if (const auto ckpt = t["checkpoint"].value<std::string>()) app.model.checkpoint = base / *ckpt;

  std::shared_ptr<const model::EmotionModel> m =
      app.model.checkpoint.empty() ? std::make_shared<const model::EmotionModel>(app.model.config)
                                   : std::make_shared<const model::EmotionModel>(model::EmotionModel::load(app.model.checkpoint));
  std::shared_ptr<const model::TextBackend> text =
      model::make_text_backend(t["text_backend"].value_or(app.model.text_backend), m->config().text_embedding_dim);

  // Continuous gold scores need an explicit rule for 0; without one numeric
  // gold must already be 0/1.
  std::optional<eval::ZeroLabel> zero;
  if (const auto z = t["zero_label"].value<std::string>()) zero = eval::parse_zero_label(*z);

  const fs::path data_base = dataset_path.parent_path();
  std::vector<eval::AblationItem> items;
  for (const auto& j : read_jsonl(dataset_path)) {
    eval::AblationItem item;
    item.id = j.at("id").get<std::string>();
    const auto& gold = j.at("gold");
    if (gold.is_string()) {
      const auto g = gold.get<std::string>();
      if (g != "positive" && g != "negative") throw Error(ErrorCode::InvalidConfig, "item " + item.id + ": gold '" + g + "'");
      item.gold = g == "positive" ? 1 : 0;
    } else if (zero) {
      const auto g = eval::binarize_score(gold.get<double>(), *zero);
      if (!g) continue;
      item.gold = *g;
    } else {
      const double g = gold.get<double>();
      if (g != 0.0 && g != 1.0) {
        throw Error(ErrorCode::InvalidConfig, "item " + item.id + ": continuous gold needs zero_label in the config");
      }
      item.gold = static_cast<int>(g);
    }
    for (const auto& [k, v] : j.at("texts").items()) item.texts[eval::parse_text_source(k)] = v.get<std::string>();
    item.inputs.audio = read_wav(data_base / j.at("audio").get<std::string>());
    item.inputs.faces = read_faces(data_base, j);
    items.push_back(std::move(item));
  }
  const eval::ModelScorer scorer(m, text);
  const auto results = eval::run_ablation(experiments, baseline, items, scorer, convention);
  auto report = eval::to_json(results, baseline);
  report["zero_label"] = t["zero_label"].value<std::string>() ? json(*t["zero_label"].value<std::string>()) : json(nullptr);
  emit(out, report.dump(2) + "\n");
  return 0;
}

int cmd_serve(const std::string& config, int port) {
  auto cfg = load_app_config(config);
  if (port > 0) cfg.service.port = port;
  service::Service svc(service::make_context(cfg));
  std::cerr << "listening on " << cfg.service.host << ":" << cfg.service.port << " (data " << cfg.service.data_dir
            << ")\n";
  if (!service::serve(svc, cfg.service.host, cfg.service.port)) {
    throw Error(ErrorCode::IoFailure, "cannot listen on port " + std::to_string(cfg.service.port));
  }
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return 2;
    case ErrorCode::IoFailure: return 3;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal short-video emotion analysis"};
  app.require_subcommand(1);

  std::string config;
  std::string out;

  auto* seg = app.add_subcommand("segment", "Split a 16 kHz mono WAV into utterances");
  std::string seg_wav;
  std::optional<std::int64_t> min_silence;
  std::optional<double> floor_db;
  seg->add_option("wav", seg_wav)->required()->check(CLI::ExistingFile);
  seg->add_option("--config", config)->check(CLI::ExistingFile);
  seg->add_option("--min-silence-ms", min_silence);
  seg->add_option("--floor-db", floor_db);
  seg->add_option("--out", out);

  auto* tr = app.add_subcommand("transcribe", "Transcribe the segments of a WAV");
  std::string tr_wav, tr_segments, tr_backend = "echo", tr_task, tr_language;
  int tr_workers = 1;
  tr->add_option("wav", tr_wav)->required()->check(CLI::ExistingFile);
  tr->add_option("--segments", tr_segments, "segment JSON lines (from `segment`)")->required()->check(CLI::ExistingFile);
  tr->add_option("--backend", tr_backend, "echo | command:<path>");
  tr->add_option("--task", tr_task, "recognize | translate");
  tr->add_option("--language", tr_language);
  tr->add_option("--workers", tr_workers);
  tr->add_option("--out", out);

  auto* trn = app.add_subcommand("train", "Train the emotion model");
  std::string trn_data;
  model::TrainSchedule schedule;
  trn->add_option("--config", config)->check(CLI::ExistingFile);
  trn->add_option("--data", trn_data, "directory with manifest.jsonl")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--out", out, "checkpoint path")->required();
  trn->add_option("--epochs", schedule.epochs);
  trn->add_option("--batch", schedule.batch);
  trn->add_option("--grad-accum", schedule.grad_accum);
  trn->add_option("--lr", schedule.learning_rate);

  auto* inf = app.add_subcommand("infer", "Analyze one video with a trained checkpoint");
  std::string inf_ckpt, inf_video;
  inf->add_option("--ckpt", inf_ckpt)->required()->check(CLI::ExistingFile);
  inf->add_option("--video", inf_video)->required()->check(CLI::ExistingFile);
  inf->add_option("--config", config)->check(CLI::ExistingFile);
  inf->add_option("--out", out);

  auto* an = app.add_subcommand("analyze", "Run the full pipeline on one video, no server");
  std::string an_video;
  an->add_option("video", an_video)->required()->check(CLI::ExistingFile);
  an->add_option("--config", config)->check(CLI::ExistingFile);
  an->add_option("--out", out);

  auto* kp = app.add_subcommand("kappa", "Inter-annotator agreement");
  std::string kp_ratings, kp_mode = "fleiss", kp_raters;
  kp->add_option("--ratings", kp_ratings, "CSV video_id,rater_id,label")->required()->check(CLI::ExistingFile);
  kp->add_option("--mode", kp_mode)->check(CLI::IsMember({"fleiss", "cohen"}));
  kp->add_option("--raters", kp_raters, "two rater ids for cohen, e.g. r1,r2");
  bool kp_valid_only = false;
  kp->add_flag("--valid-only", kp_valid_only, "only videos whose resolved label is valid");

  auto* lb = app.add_subcommand("labels", "Majority-vote dataset labels");
  std::string lb_ratings;
  int raters_per_video = 3;
  lb->add_option("--ratings", lb_ratings)->required()->check(CLI::ExistingFile);
  lb->add_option("--raters", raters_per_video);
  lb->add_option("--out", out);

  auto* st = app.add_subcommand("stats", "Dataset statistics");
  std::string st_ratings, st_meta;
  st->add_option("--ratings", st_ratings)->required()->check(CLI::ExistingFile);
  st->add_option("--metadata", st_meta, "JSON lines {video_id,duration_s,language,poster}")->check(CLI::ExistingFile);
  st->add_option("--raters", raters_per_video);
  st->add_option("--out", out);

  auto* ev = app.add_subcommand("eval", "Binary sentiment metrics");
  std::string ev_pred, ev_gold;
  bool ev_macro = false;
  ev->add_option("--pred", ev_pred)->required()->check(CLI::ExistingFile);
  ev->add_option("--gold", ev_gold)->required()->check(CLI::ExistingFile);
  ev->add_flag("--macro", ev_macro, "macro-average precision/recall/F1");
  ev->add_option("--out", out);

  auto* ab = app.add_subcommand("ablate", "Text-source ablation");
  std::string ab_config;
  ab->add_option("--config", ab_config)->required()->check(CLI::ExistingFile);
  ab->add_option("--out", out);

  auto* sv = app.add_subcommand("serve", "HTTP job service");
  int port = 0;
  sv->add_option("--config", config)->check(CLI::ExistingFile);
  sv->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*seg) return cmd_segment(seg_wav, config, min_silence, floor_db, out);
    if (*tr) return cmd_transcribe(tr_wav, tr_segments, tr_backend, tr_task, tr_language, tr_workers, out);
    if (*trn) return cmd_train(config, trn_data, out, schedule);
    if (*inf) return cmd_analyze(inf_video, config, inf_ckpt, out);
    if (*an) return cmd_analyze(an_video, config, "", out);
    if (*kp) return cmd_kappa(kp_ratings, kp_mode, kp_raters, kp_valid_only);
    if (*lb) return cmd_labels(lb_ratings, raters_per_video, out);
    if (*st) return cmd_stats(st_ratings, st_meta, raters_per_video, out);
    if (*ev) return cmd_eval(ev_pred, ev_gold, ev_macro, out);
    if (*ab) return cmd_ablate(ab_config, out);
    if (*sv) return cmd_serve(config, port);
  } catch (const Error& e) {
    std::cerr << "mseva: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "mseva: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
