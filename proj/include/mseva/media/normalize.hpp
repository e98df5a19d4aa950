#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "mseva/common/wav.hpp"
#include "mseva/media/types.hpp"

namespace mseva::media {

struct MediaInfo {
  std::int64_t duration_ms = 0;
  int width_px = 0;
  int height_px = 0;
  Rational fps;
  int audio_streams = 0;
  int video_streams = 0;
  int audio_sample_rate = 0;
  int audio_channels = 0;
};

/// Container inspection only, no decoding. Throws Error{UnreadableMedia}.
MediaInfo probe_media(const std::filesystem::path& path);

/// Converts a container into the canonical pair (mono 16 kHz s16le wav,
/// MJPEG AVI at the target resolution).
class Transcoder {
 public:
  virtual ~Transcoder() = default;
  virtual void transcode(const std::filesystem::path& input, const std::filesystem::path& out_wav,
                         const std::filesystem::path& out_video, int dst_width, int dst_height) = 0;
};

class LibavTranscoder final : public Transcoder {
 public:
  void transcode(const std::filesystem::path& input, const std::filesystem::path& out_wav,
                 const std::filesystem::path& out_video, int dst_width, int dst_height) override;
};

/// Runs `<binary> <input> <out.wav> <out.avi> <dst_w> <dst_h>` and expects a
/// zero exit status plus both outputs on disk.
class ExternalTranscoder final : public Transcoder {
 public:
  explicit ExternalTranscoder(std::filesystem::path binary) : binary_(std::move(binary)) {}
  void transcode(const std::filesystem::path& input, const std::filesystem::path& out_wav,
                 const std::filesystem::path& out_video, int dst_width, int dst_height) override;

 private:
  std::filesystem::path binary_;
};

/// External transcoder when MSEVA_TRANSCODER is set, libav otherwise.
std::unique_ptr<Transcoder> make_default_transcoder();

/// Decodes the first audio stream to mono 16 kHz. A stream that is already
/// s16 mono 16 kHz PCM is copied sample for sample.
AudioBuffer decode_audio(const std::filesystem::path& path);

MediaAsset normalize_container(const std::filesystem::path& source_path,
                               const std::filesystem::path& work_dir,
                               std::span<const ResolutionRule> rules, Transcoder& transcoder,
                               std::optional<std::string> language_hint = std::nullopt);

}  // namespace mseva::media
