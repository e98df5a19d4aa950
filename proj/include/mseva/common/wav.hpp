#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mseva {

inline constexpr int kSampleRate = 16000;
inline constexpr int kSamplesPerMs = kSampleRate / 1000;

/// Mono PCM buffer. Samples are normalized to [-1, 1).
struct AudioBuffer {
  int sample_rate = kSampleRate;
  std::vector<float> samples;

  std::int64_t duration_ms() const {
    return static_cast<std::int64_t>(samples.size()) * 1000 / sample_rate;
  }
};

// 16-bit PCM RIFF/WAVE. Multi-channel input is averaged down to mono on read.
AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

std::int16_t to_pcm16(float sample);

}  // namespace mseva
