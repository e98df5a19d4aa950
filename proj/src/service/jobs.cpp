#include "mseva/service/jobs.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <random>
#include <set>

#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"

namespace mseva::service {

namespace fs = std::filesystem;

namespace {

constexpr JobState kOrder[] = {JobState::Queued,       JobState::Preprocessing, JobState::Segmenting,
                               JobState::Transcribing, JobState::Inferring,     JobState::Done};

int rank(JobState s) {
  for (int i = 0; i < 6; ++i) {
    if (kOrder[i] == s) return i;
  }
  return 6;  // failed
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

}  // namespace

std::string to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Preprocessing: return "preprocessing";
    case JobState::Segmenting: return "segmenting";
    case JobState::Transcribing: return "transcribing";
    case JobState::Inferring: return "inferring";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "unknown";
}

JobState parse_job_state(const std::string& s) {
  for (auto st : {JobState::Queued, JobState::Preprocessing, JobState::Segmenting, JobState::Transcribing,
                  JobState::Inferring, JobState::Done, JobState::Failed}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::IoFailure, "unknown job state '" + s + "'");
}

JobState state_for(Stage s) {
  switch (s) {
    case Stage::Preprocessing: return JobState::Preprocessing;
    case Stage::Segmenting: return JobState::Segmenting;
    case Stage::Transcribing: return JobState::Transcribing;
    case Stage::Inferring: return JobState::Inferring;
  }
  return JobState::Failed;
}

bool is_terminal(JobState s) { return s == JobState::Done || s == JobState::Failed; }

nlohmann::json AnalysisJob::to_json() const {
  nlohmann::json j = {{"job_id", job_id},
                      {"asset_id", asset_id},
                      {"state", to_string(state)},
                      {"submitted_at", submitted_at},
                      {"finished_at", finished_at ? nlohmann::json(*finished_at) : nlohmann::json(nullptr)},
                      {"source_name", source_name},
                      {"result_sha256", result_sha256 ? nlohmann::json(*result_sha256) : nlohmann::json(nullptr)},
                      {"attempts", attempts},
                      {"error", nullptr}};
  if (error) j["error"] = {{"stage", error->stage}, {"code", error->code}, {"message", error->message}};
  return j;
}

AnalysisJob AnalysisJob::from_json(const nlohmann::json& j) {
  AnalysisJob job;
  job.job_id = j.at("job_id").get<std::string>();
  job.asset_id = j.at("asset_id").get<std::string>();
  job.state = parse_job_state(j.at("state").get<std::string>());
  job.submitted_at = j.at("submitted_at").get<std::string>();
  if (!j.at("finished_at").is_null()) job.finished_at = j.at("finished_at").get<std::string>();
  job.source_name = j.at("source_name").get<std::string>();
  if (!j.at("result_sha256").is_null()) job.result_sha256 = j.at("result_sha256").get<std::string>();
  job.attempts = j.at("attempts").get<int>();
  if (const auto& e = j.at("error"); !e.is_null()) {
    job.error = JobError{e.at("stage").get<std::string>(), e.at("code").get<std::string>(), e.at("message").get<std::string>()};
  }
  return job;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::string new_job_id() {
  static std::mutex mutex;
  static std::random_device rd;
  std::lock_guard lock(mutex);
  std::string bytes;
  for (int i = 0; i < 4; ++i) {
    const std::uint32_t v = rd();
    bytes.append(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  return sha256_hex(bytes + utc_now_iso8601()).substr(0, 32);
}

JobStore::JobStore(fs::path data_dir) : dir_(std::move(data_dir)) {
  for (const char* sub : {"jobs", "results", "uploads", "work"}) fs::create_directories(dir_ / sub);
}

fs::path JobStore::upload_dir(const std::string& job_id) const { return dir_ / "uploads" / job_id; }
fs::path JobStore::work_dir(const std::string& job_id) const { return dir_ / "work" / job_id; }
fs::path JobStore::source_path(const AnalysisJob& job) const { return upload_dir(job.job_id) / job.source_name; }

void JobStore::write(const AnalysisJob& job) const {
  write_file_atomic(dir_ / "jobs" / (job.job_id + ".json"), job.to_json().dump(2) + "\n");
}

AnalysisJob JobStore::read(const std::string& job_id) const {
  if (!valid_id(job_id)) throw Error(ErrorCode::UnknownJob, "no job '" + job_id + "'");
  const auto path = dir_ / "jobs" / (job_id + ".json");
  if (!fs::exists(path)) throw Error(ErrorCode::UnknownJob, "no job '" + job_id + "'");
  try {
    return AnalysisJob::from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoFailure, "corrupt job record " + path.string() + ": " + e.what());
  }
}

AnalysisJob JobStore::create(const std::string& job_id, const std::string& source_name) {
  if (!valid_id(job_id)) throw Error(ErrorCode::InvalidConfig, "invalid job id");
  std::lock_guard lock(mutex_);
  if (fs::exists(dir_ / "jobs" / (job_id + ".json"))) throw Error(ErrorCode::InvariantViolation, "job exists: " + job_id);
  AnalysisJob job;
  job.job_id = job_id;
  job.source_name = source_name;
  job.submitted_at = utc_now_iso8601();
  write(job);
  return job;
}

AnalysisJob JobStore::get(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  return read(job_id);
}

std::vector<AnalysisJob> JobStore::list() const {
  std::lock_guard lock(mutex_);
  std::vector<AnalysisJob> out;
  for (const auto& entry : fs::directory_iterator(dir_ / "jobs")) {
    if (entry.path().extension() != ".json") continue;
    out.push_back(read(entry.path().stem().string()));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.submitted_at, a.job_id) < std::tie(b.submitted_at, b.job_id);
  });
  return out;
}

AnalysisJob JobStore::advance(const std::string& job_id, JobState next, const std::string& asset_id) {
  std::lock_guard lock(mutex_);
  AnalysisJob job = read(job_id);
  if (is_terminal(job.state) || next == JobState::Failed || next == JobState::Done || rank(next) <= rank(job.state)) {
    throw Error(ErrorCode::InvariantViolation,
                "job " + job_id + ": illegal transition " + to_string(job.state) + " -> " + to_string(next));
  }
  job.state = next;
  if (!asset_id.empty()) job.asset_id = asset_id;
  write(job);
  return job;
}

AnalysisJob JobStore::fail(const std::string& job_id, JobError error) {
  std::lock_guard lock(mutex_);
  AnalysisJob job = read(job_id);
  if (is_terminal(job.state)) throw Error(ErrorCode::InvariantViolation, "job " + job_id + " already finished");
  job.state = JobState::Failed;
  job.error = std::move(error);
  job.finished_at = utc_now_iso8601();
  write(job);
  return job;
}

AnalysisJob JobStore::complete(const std::string& job_id, const std::string& asset_id, const std::string& result_json) {
  std::lock_guard lock(mutex_);
  AnalysisJob job = read(job_id);
  if (job.state == JobState::Done) return job;
  if (job.state == JobState::Failed) throw Error(ErrorCode::InvariantViolation, "job " + job_id + " already failed");
  const std::string sha = sha256_hex(result_json);
  const auto path = dir_ / "results" / (sha + ".json");
  if (!fs::exists(path)) write_file_atomic(path, result_json);
  job.state = JobState::Done;
  job.asset_id = asset_id;
  job.result_sha256 = sha;
  job.finished_at = utc_now_iso8601();
  write(job);
  return job;
}

std::string JobStore::result(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  const AnalysisJob job = read(job_id);
  if (job.state != JobState::Done || !job.result_sha256) {
    throw Error(ErrorCode::NotReady, "job " + job_id + " is " + to_string(job.state));
  }
  return read_file(dir_ / "results" / (*job.result_sha256 + ".json"));
}

std::vector<std::string> JobStore::recover() {
  std::vector<std::string> requeue;
  std::set<std::string> referenced;
  for (const auto& entry : fs::directory_iterator(dir_ / "jobs")) {
    if (entry.path().filename().string().find(".tmp.") != std::string::npos) fs::remove(entry.path());
  }
  for (AnalysisJob job : list()) {
    std::lock_guard lock(mutex_);
    if (job.state == JobState::Done && job.result_sha256) referenced.insert(*job.result_sha256 + ".json");
    if (is_terminal(job.state)) continue;
    if (job.state != JobState::Queued) ++job.attempts;
    job.state = JobState::Queued;
    fs::remove_all(work_dir(job.job_id));
    write(job);
    requeue.push_back(job.job_id);
  }
  std::lock_guard lock(mutex_);
  for (const auto& entry : fs::directory_iterator(dir_ / "results")) {
    if (!referenced.contains(entry.path().filename().string())) fs::remove(entry.path());
  }
  return requeue;
}

}  // namespace mseva::service
