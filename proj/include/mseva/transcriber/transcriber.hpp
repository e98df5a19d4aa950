#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mseva/common/wav.hpp"
#include "mseva/segmenter/segmenter.hpp"

namespace mseva::transcriber {

using segmenter::UtteranceSegment;

enum class AsrTask { Recognize, Translate };

std::string to_string(AsrTask task);
AsrTask parse_task(const std::string& text);

/// English text is the downstream contract, so anything not known to be
/// English is translated.
AsrTask default_task(const std::optional<std::string>& language_hint);

class AsrBackend {
 public:
  virtual ~AsrBackend() = default;
  virtual std::string name() const = 0;
  virtual bool supports(AsrTask task) const = 0;
  /// 0 means unlimited; 1 serializes all calls into this adapter.
  virtual int max_concurrency() const { return 0; }
  virtual std::string transcribe(const AudioBuffer& clip, AsrTask task,
                                 const std::optional<std::string>& language_hint) const = 0;
};

/// Returns the clip duration in milliseconds as text. Deterministic and
/// thread-safe; used wherever model weights are unavailable.
class EchoStubAsr final : public AsrBackend {
 public:
  std::string name() const override { return "echo"; }
  bool supports(AsrTask) const override { return true; }
  std::string transcribe(const AudioBuffer& clip, AsrTask task,
                         const std::optional<std::string>& language_hint) const override;
};

/// Shells out once per clip:
///   <command> --task recognize|translate [--language L] [--model M] <clip.wav>
/// and takes trimmed stdout as the transcript. M comes from MSEVA_ASR_MODEL.
class CommandAsr final : public AsrBackend {
 public:
  CommandAsr(std::string command, std::optional<std::string> model_path, int max_concurrency = 1);
  std::string name() const override { return "command:" + command_; }
  bool supports(AsrTask) const override { return true; }
  int max_concurrency() const override { return max_concurrency_; }
  std::string transcribe(const AudioBuffer& clip, AsrTask task,
                         const std::optional<std::string>& language_hint) const override;

 private:
  std::string command_;
  std::optional<std::string> model_path_;
  int max_concurrency_;
};

/// "echo" or "command:<path>".
std::unique_ptr<AsrBackend> make_asr_backend(const std::string& spec);

struct Transcript {
  std::string asset_id;
  std::vector<UtteranceSegment> segments;
  AsrTask task = AsrTask::Translate;
  std::string backend_name;
};

/// Transcribes every clip, up to `max_workers` at a time (further capped by the
/// backend). Throws Error{BackendFailure} naming the first failing index; no
/// partial transcript is returned.
Transcript transcribe_segments(std::span<const AudioBuffer> clips, std::span<const UtteranceSegment> segments,
                               const AsrBackend& backend, AsrTask task,
                               const std::optional<std::string>& language_hint = std::nullopt,
                               int max_workers = 1);

/// One JSON object per line with keys sorted and no whitespace:
/// {"end_ms":1000,"index":0,"start_ms":0,"text":"hi"}
std::string serialize_transcript(std::span<const UtteranceSegment> segments);
void write_transcript(const Transcript& transcript, const std::filesystem::path& path);

/// Throws Error{MalformedLine} (1-based line number in the message) or
/// Error{InvariantViolation}.
std::vector<UtteranceSegment> parse_transcript(const std::string& contents);
Transcript read_transcript(const std::filesystem::path& path);

/// Contiguous indices from 0, start < end, non-overlapping, ordered.
void validate_segments(std::span<const UtteranceSegment> segments);

}  // namespace mseva::transcriber
