#include "mseva/transcriber/transcriber.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"

namespace mseva::transcriber {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(AsrTask task) { return task == AsrTask::Recognize ? "recognize" : "translate"; }

AsrTask parse_task(const std::string& text) {
  if (text == "recognize") return AsrTask::Recognize;
  if (text == "translate" || text == "translate-to-English") return AsrTask::Translate;
  throw Error(ErrorCode::InvalidConfig, "unknown ASR task '" + text + "'");
}

AsrTask default_task(const std::optional<std::string>& language_hint) {
  if (language_hint && (*language_hint == "en" || language_hint->rfind("en-", 0) == 0)) {
    return AsrTask::Recognize;
  }
  return AsrTask::Translate;
}

std::string EchoStubAsr::transcribe(const AudioBuffer& clip, AsrTask, const std::optional<std::string>&) const {
  return std::to_string(clip.samples.size() * 1000 / static_cast<std::size_t>(clip.sample_rate));
}

namespace {

std::string shell_quote(const std::string& arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

CommandAsr::CommandAsr(std::string command, std::optional<std::string> model_path, int max_concurrency)
    : command_(std::move(command)), model_path_(std::move(model_path)), max_concurrency_(max_concurrency) {}

std::string CommandAsr::transcribe(const AudioBuffer& clip, AsrTask task,
                                   const std::optional<std::string>& language_hint) const {
  static std::atomic<unsigned> counter{0};
  const fs::path wav = fs::temp_directory_path() /
                       ("mseva-asr-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".wav");
  write_wav(wav, clip);

  std::string cmd = shell_quote(command_) + " --task " + to_string(task);
  if (language_hint) cmd += " --language " + shell_quote(*language_hint);
  if (model_path_) cmd += " --model " + shell_quote(*model_path_);
  cmd += " " + shell_quote(wav.string());

  std::string output;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    fs::remove(wav);
    throw Error(ErrorCode::BackendFailure, "cannot launch " + command_);
  }
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  fs::remove(wav);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::BackendFailure, command_ + " exited with status " + std::to_string(status));
  }
  return trim(std::move(output));
}

std::unique_ptr<AsrBackend> make_asr_backend(const std::string& spec) {
  if (spec == "echo" || spec == "stub") return std::make_unique<EchoStubAsr>();
  if (spec.rfind("command:", 0) == 0) {
    std::optional<std::string> model;
    if (const char* env = std::getenv("MSEVA_ASR_MODEL"); env != nullptr && *env != '\0') model = env;
    return std::make_unique<CommandAsr>(spec.substr(8), model);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown ASR backend '" + spec + "'");
}

Transcript transcribe_segments(std::span<const AudioBuffer> clips, std::span<const UtteranceSegment> segments,
                               const AsrBackend& backend, AsrTask task,
                               const std::optional<std::string>& language_hint, int max_workers) {
  if (clips.size() != segments.size()) {
    throw Error(ErrorCode::InvariantViolation, std::to_string(clips.size()) + " clips for " +
                                                   std::to_string(segments.size()) + " segments");
  }
  if (!backend.supports(task)) {
    throw Error(ErrorCode::BackendFailure, backend.name() + " does not support task " + to_string(task));
  }

  Transcript out;
  out.task = task;
  out.backend_name = backend.name();
  out.segments.assign(segments.begin(), segments.end());

  int workers = std::max(1, max_workers);
  if (backend.max_concurrency() > 0) workers = std::min(workers, backend.max_concurrency());
  workers = std::min<int>(workers, static_cast<int>(clips.size()));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::optional<std::pair<std::size_t, std::string>> first_error;

  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= clips.size()) return;
      try {
        out.segments[i].text = backend.transcribe(clips[i], task, language_hint);
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (!first_error || i < first_error->first) first_error = {{i, e.what()}};
        failed = true;
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (first_error) {
    throw Error(ErrorCode::BackendFailure,
                "segment " + std::to_string(first_error->first) + ": " + first_error->second);
  }
  return out;
}

void validate_segments(std::span<const UtteranceSegment> segments) {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.index != static_cast<int>(i)) {
      throw Error(ErrorCode::InvariantViolation,
                  "segment index " + std::to_string(s.index) + " at position " + std::to_string(i));
    }
    if (s.start_ms < 0 || s.start_ms >= s.end_ms) {
      throw Error(ErrorCode::InvariantViolation, "segment " + std::to_string(i) + " has start_ms " +
                                                     std::to_string(s.start_ms) + " >= end_ms " +
                                                     std::to_string(s.end_ms));
    }
    if (i > 0 && s.start_ms < segments[i - 1].end_ms) {
      throw Error(ErrorCode::InvariantViolation, "segment " + std::to_string(i) + " overlaps its predecessor");
    }
  }
}

std::string serialize_transcript(std::span<const UtteranceSegment> segments) {
  std::string out;
  for (const auto& s : segments) {
    const json line = {{"index", s.index}, {"start_ms", s.start_ms}, {"end_ms", s.end_ms}, {"text", s.text}};
    try {
      out += line.dump(-1, ' ', false, json::error_handler_t::strict);
    } catch (const json::exception&) {
      throw Error(ErrorCode::InvariantViolation, "segment " + std::to_string(s.index) + " text is not UTF-8");
    }
    out += '\n';
  }
  return out;
}

void write_transcript(const Transcript& transcript, const fs::path& path) {
  validate_segments(transcript.segments);
  write_file_atomic(path, serialize_transcript(transcript.segments));
}

std::vector<UtteranceSegment> parse_transcript(const std::string& contents) {
  std::vector<UtteranceSegment> segments;
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fail = [&](const std::string& why) {
      return Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    if (!j.is_object()) throw fail("not an object");
    for (const char* key : {"index", "start_ms", "end_ms"}) {
      if (!j.contains(key) || !j[key].is_number_integer()) throw fail(std::string("missing integer '") + key + "'");
    }
    if (!j.contains("text") || !j["text"].is_string()) throw fail("missing string 'text'");
    segments.push_back({j["index"].get<int>(), j["start_ms"].get<std::int64_t>(), j["end_ms"].get<std::int64_t>(),
                        j["text"].get<std::string>()});
  }
  validate_segments(segments);
  return segments;
}

Transcript read_transcript(const fs::path& path) {
  Transcript t;
  t.segments = parse_transcript(read_file(path));
  return t;
}

}  // namespace mseva::transcriber
