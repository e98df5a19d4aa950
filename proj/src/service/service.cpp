#include "mseva/service/service.hpp"

#include <cstdlib>
#include <filesystem>

#include "httplib.h"
#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"

namespace mseva::service {

namespace fs = std::filesystem;

SubmitOptions parse_submit_options(const std::string& json_text) {
  SubmitOptions o;
  if (json_text.empty()) return o;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "options must be a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (k == "allow_long") o.allow_long = v.get<bool>();
      else throw Error(ErrorCode::InvalidConfig, "unknown option '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("options: ") + e.what());
  }
  return o;
}

namespace {

std::string safe_extension(const std::string& filename) {
  const std::string ext = fs::path(filename).extension().string();
  if (ext.size() < 2 || ext.size() > 8) return ".bin";
  for (std::size_t i = 1; i < ext.size(); ++i) {
    if (!std::isalnum(static_cast<unsigned char>(ext[i]))) return ".bin";
  }
  return ext;
}

// Test hook: terminate the process abruptly on entry to the named stage.
void maybe_inject_fault(JobState state) {
  const char* stage = std::getenv("MSEVA_FAULT_STAGE");
  if (stage != nullptr && to_string(state) == stage) std::_Exit(86);
}

}  // namespace

Service::Service(PipelineContext ctx, bool start_workers)
    : ctx_(std::move(ctx)), store_(ctx_.config.service.data_dir) {
  for (const auto& id : store_.recover()) queue_.push_back(id);
  if (start_workers) {
    for (int i = 0; i < ctx_.config.service.workers; ++i) {
      workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
    }
  }
}

Service::~Service() { stop(); }

void Service::stop() {
  for (auto& w : workers_) w.request_stop();
  cv_.notify_all();
  workers_.clear();  // joins
}

std::string Service::submit(std::string_view bytes, const std::string& filename, const SubmitOptions& options) {
  const auto& limits = ctx_.config.service;
  if (static_cast<std::int64_t>(bytes.size()) > limits.max_upload_bytes) {
    throw Error(ErrorCode::TooLarge, std::to_string(bytes.size()) + " bytes exceeds the " +
                                         std::to_string(limits.max_upload_bytes) + "-byte limit");
  }
  const std::string id = new_job_id();
  const std::string source_name = "source" + safe_extension(filename);
  const auto dir = store_.upload_dir(id);
  fs::create_directories(dir);
  try {
    write_file_atomic(dir / source_name, bytes);
    const auto info = media::probe_media(dir / source_name);
    if (info.audio_streams == 0) throw Error(ErrorCode::NoAudioStream, "upload has no audio stream");
    if (info.video_streams == 0) throw Error(ErrorCode::NoVideoStream, "upload has no video stream");
    if (!options.allow_long && info.duration_ms > limits.max_duration_ms) {
      throw Error(ErrorCode::TooLong, std::to_string(info.duration_ms) + " ms exceeds the " +
                                          std::to_string(limits.max_duration_ms) + " ms limit");
    }
    store_.create(id, source_name);
  } catch (...) {
    fs::remove_all(dir);
    throw;
  }
  enqueue(id);
  return id;
}

void Service::enqueue(const std::string& id) {
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(id);
  }
  cv_.notify_one();
}

void Service::worker_loop(std::stop_token st) {
  while (true) {
    std::string id;
    {
      std::unique_lock lock(mutex_);
      if (!cv_.wait(lock, st, [this] { return !queue_.empty(); })) return;
      id = queue_.front();
      queue_.pop_front();
      ++busy_;
    }
    run_job(id);
    {
      std::lock_guard lock(mutex_);
      --busy_;
    }
    idle_cv_.notify_all();
  }
}

void Service::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && busy_ == 0; });
}

void Service::run_job(const std::string& id) {
  AnalysisJob job;
  try {
    job = store_.get(id);
  } catch (const Error&) {
    return;
  }
  if (job.state != JobState::Queued) return;
  maybe_inject_fault(JobState::Queued);
  const auto work = store_.work_dir(id);
  Stage failed = Stage::Preprocessing;
  try {
    const auto result = run_pipeline(
        id, store_.source_path(job), work, ctx_,
        [&](Stage s) {
          store_.advance(id, state_for(s));
          maybe_inject_fault(state_for(s));
        },
        &failed);
    store_.complete(id, result.asset_id, serialize_result(result, ctx_.model->config()));
  } catch (const Error& e) {
    store_.fail(id, {to_string(failed), std::string(to_string(e.code())), e.detail()});
  } catch (const std::exception& e) {
    store_.fail(id, {to_string(failed), std::string(to_string(ErrorCode::InvariantViolation)), e.what()});
  }
  std::error_code ec;
  fs::remove_all(work, ec);
}

nlohmann::json Service::result(const std::string& id) const { return nlohmann::json::parse(store_.result(id)); }

nlohmann::json Service::summary(const std::string& id) const {
  const AnalysisJob job = store_.get(id);
  nlohmann::json j = job.to_json();
  j.erase("source_name");
  j.erase("result_sha256");
  if (job.state == JobState::Done) {
    const auto r = result(id);
    const auto& v = r.at("video_verdict");
    j["verdict"] = {{"emotion", v.at("emotion")},
                    {"sentiment", v.at("sentiment")},
                    {"positive_probability", v.at("positive_probability")},
                    {"segments", r.at("track").size()}};
  }
  return j;
}

nlohmann::json Service::result_or_state(const std::string& id) const {
  const AnalysisJob job = store_.get(id);
  if (job.state == JobState::Done) return result(id);
  return {{"job_id", job.job_id}, {"state", to_string(job.state)}};
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownJob: return 404;
    case ErrorCode::NotReady: return 409;
    case ErrorCode::TooLarge: return 413;
    case ErrorCode::TooLong:
    case ErrorCode::UnreadableMedia:
    case ErrorCode::NoAudioStream:
    case ErrorCode::NoVideoStream: return 422;
    case ErrorCode::InvalidConfig: return 400;
    default: return 500;
  }
}

nlohmann::json error_body(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_json(res, http_status(e.code()), error_body(e.code(), e.detail()));
  } catch (const std::exception& e) {
    send_json(res, 500, error_body(ErrorCode::InvariantViolation, e.what()));
  }
}

}  // namespace

void register_routes(httplib::Server& server, Service& service) {
  server.set_payload_max_length(static_cast<std::size_t>(service.context().config.service.max_upload_bytes) + (1 << 20));
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 413) {
      send_json(res, 413, error_body(ErrorCode::TooLarge, "upload exceeds the size limit"));
    } else if (res.status == 404) {
      send_json(res, 404, error_body(ErrorCode::UnknownJob, "no such route"));
    }
  });

  server.Get("/api/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  server.Post("/api/jobs", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.is_multipart_form_data() || !req.has_file("file")) {
        throw Error(ErrorCode::InvalidConfig, "expected multipart form with a 'file' part");
      }
      const auto file = req.get_file_value("file");
      const auto options = parse_submit_options(req.has_file("options") ? req.get_file_value("options").content : "");
      const auto id = service.submit(file.content, file.filename, options);
      send_json(res, 202, {{"job_id", id}});
    });
  });

  server.Get(R"(/api/jobs/([A-Za-z0-9-]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.summary(req.matches[1])); });
  });
  server.Get(R"(/api/jobs/([A-Za-z0-9-]+)/result)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.result_or_state(req.matches[1])); });
  });
  server.Get(R"(/api/jobs/([A-Za-z0-9-]+)/track)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.track(req.matches[1])); });
  });
  server.Get(R"(/api/jobs/([A-Za-z0-9-]+)/modalities)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.modalities(req.matches[1])); });
  });
}

bool serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  register_routes(server, service);
  return server.listen(host, port);
}

}  // namespace mseva::service
