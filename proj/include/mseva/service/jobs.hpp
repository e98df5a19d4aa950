#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mseva/service/pipeline.hpp"

namespace mseva::service {

enum class JobState { Queued, Preprocessing, Segmenting, Transcribing, Inferring, Done, Failed };
std::string to_string(JobState s);
JobState parse_job_state(const std::string& s);
JobState state_for(Stage s);
bool is_terminal(JobState s);

struct JobError {
  std::string stage;
  std::string code;
  std::string message;
};

struct AnalysisJob {
  std::string job_id;
  std::string asset_id;  // known once preprocessing finished, else empty
  JobState state = JobState::Queued;
  std::string submitted_at;  // ISO 8601 UTC
  std::optional<std::string> finished_at;
  std::optional<JobError> error;
  std::string source_name;  // file name of the upload inside uploads/<job_id>/
  std::optional<std::string> result_sha256;
  int attempts = 0;

  nlohmann::json to_json() const;
  static AnalysisJob from_json(const nlohmann::json& j);
};

/// Job records and results under a data directory:
///   jobs/<job_id>.json        one record per job, rewritten atomically
///   results/<sha256>.json     result documents, content-addressed
///   uploads/<job_id>/         the submitted file
///   work/<job_id>/            scratch space of the running attempt
/// A result is visible only through a done job record, and the record is
/// written after the result, so a crash never exposes a partial result.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const { return dir_; }
  std::filesystem::path upload_dir(const std::string& job_id) const;
  std::filesystem::path work_dir(const std::string& job_id) const;
  std::filesystem::path source_path(const AnalysisJob& job) const;

  /// Persists a new queued job.
  AnalysisJob create(const std::string& job_id, const std::string& source_name);
  /// Throws Error{UnknownJob}.
  AnalysisJob get(const std::string& job_id) const;
  std::vector<AnalysisJob> list() const;

  /// Forward-only transition. Throws Error{InvariantViolation} for a
  /// transition against the declared order or out of a terminal state.
  AnalysisJob advance(const std::string& job_id, JobState next, const std::string& asset_id = {});
  AnalysisJob fail(const std::string& job_id, JobError error);
  /// Writes the result document, then marks the job done. A job that is
  /// already done keeps its first result.
  AnalysisJob complete(const std::string& job_id, const std::string& asset_id, const std::string& result_json);

  /// Throws Error{UnknownJob} or Error{NotReady}.
  std::string result(const std::string& job_id) const;

  /// Startup recovery: every non-terminal job goes back to queued (its work
  /// directory is cleared) and result files no done job references are
  /// removed. Returns the jobs to re-run in submission order.
  std::vector<std::string> recover();

 private:
  void write(const AnalysisJob& job) const;
  AnalysisJob read(const std::string& job_id) const;

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

std::string utc_now_iso8601();
std::string new_job_id();

}  // namespace mseva::service
