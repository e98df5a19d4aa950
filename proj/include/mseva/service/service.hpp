#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mseva/common/error.hpp"
#include "mseva/service/jobs.hpp"
#include "mseva/service/pipeline.hpp"

namespace httplib {
class Server;
}

namespace mseva::service {

struct SubmitOptions {
  bool allow_long = false;  // lift the duration limit
};
SubmitOptions parse_submit_options(const std::string& json_text);

/// Job queue plus worker pool over a JobStore. Each queued job is owned by
/// exactly one worker. Pending jobs from a previous process are recovered
/// on construction.
class Service {
 public:
  Service(PipelineContext ctx, bool start_workers = true);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Validates size and duration, stores the upload and queues a job.
  /// Throws Error{TooLarge|TooLong|UnreadableMedia|NoAudioStream|NoVideoStream}.
  std::string submit(std::string_view bytes, const std::string& filename, const SubmitOptions& options);

  AnalysisJob job(const std::string& id) const { return store_.get(id); }
  /// Full result for a done job, else the job-state payload.
  nlohmann::json result_or_state(const std::string& id) const;
  /// Throws Error{UnknownJob|NotReady}.
  nlohmann::json result(const std::string& id) const;
  nlohmann::json track(const std::string& id) const { return track_json(result(id)); }
  nlohmann::json modalities(const std::string& id) const { return modalities_json(result(id)); }
  nlohmann::json summary(const std::string& id) const;

  /// Runs one job to a terminal state on the calling thread.
  void run_job(const std::string& id);
  /// Blocks until the queue is empty and no worker is busy.
  void wait_idle();
  void stop();

  JobStore& store() { return store_; }
  const PipelineContext& context() const { return ctx_; }

 private:
  void enqueue(const std::string& id);
  void worker_loop(std::stop_token st);

  PipelineContext ctx_;
  JobStore store_;
  std::mutex mutex_;
  std::condition_variable_any cv_;
  std::condition_variable_any idle_cv_;
  std::deque<std::string> queue_;
  int busy_ = 0;
  std::vector<std::jthread> workers_;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);
nlohmann::json error_body(ErrorCode code, const std::string& message);

/// Registers the /api routes on `server`.
void register_routes(httplib::Server& server, Service& service);

/// Blocking HTTP server; returns when `server.stop()` is called or binding fails.
bool serve(Service& service, const std::string& host, int port);

}  // namespace mseva::service
