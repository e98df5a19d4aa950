#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mseva/common/wav.hpp"

namespace mseva::testkit {

using Span = std::pair<std::int64_t, std::int64_t>;  // [start_ms, end_ms)

/// Voiced bursts (harmonic tone, about -14 dBFS rms) over a low noise bed
/// (about -65 dBFS). Deterministic in `seed`.
AudioBuffer synth_speech(std::int64_t duration_ms, const std::vector<Span>& bursts, int sample_rate = kSampleRate,
                         std::uint64_t seed = 1);

struct VideoSpec {
  int width = 480;
  int height = 560;
  int fps = 25;
  std::int64_t duration_ms = 8000;
  std::vector<Span> bursts = {{300, 1800}, {2900, 4600}, {5700, 7200}};
  bool with_audio = true;
  bool with_video = true;
  std::string audio_codec = "aac";  // "aac" or "pcm_s16le"
  int sample_rate = 44100;
  int channels = 2;
  std::filesystem::path face_image;  // pasted into every frame when set
  std::uint64_t seed = 1;
};

/// Encodes a synthetic clip (mpeg4 video) with libav; the container follows
/// the file extension (.mp4, .mkv, .avi).
void write_video(const std::filesystem::path& path, const VideoSpec& spec);

/// Bundled test data directory (tests/data).
std::filesystem::path test_data_dir();
/// Fresh empty directory under the system temp dir.
std::filesystem::path make_temp_dir(const std::string& tag);

}  // namespace mseva::testkit
