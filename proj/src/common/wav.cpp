#include "mseva/common/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mseva/common/error.hpp"

namespace mseva {
namespace {

template <typename T>
void put(std::ofstream& out, T value) {
  // little-endian host assumed (x86_64 / aarch64)
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

}  // namespace

std::int16_t to_pcm16(float sample) {
  const float scaled = std::round(sample * 32768.0f);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0f, 32767.0f));
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());

  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, 1);  // PCM
  put<std::uint16_t>(out, 1);  // mono
  put<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate * 2));
  put<std::uint16_t>(out, 2);
  put<std::uint16_t>(out, 16);
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);

  std::vector<std::int16_t> pcm(audio.samples.size());
  std::transform(audio.samples.begin(), audio.samples.end(), pcm.begin(), to_pcm16);
  out.write(reinterpret_cast<const char*>(pcm.data()),
            static_cast<std::streamsize>(pcm.size() * 2));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::UnreadableMedia, "not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  bool have_fmt = false;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = get<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt " && size >= 16 && body + 16 <= buf.size()) {
      format = get<std::uint16_t>(buf, body);
      channels = get<std::uint16_t>(buf, body + 2);
      rate = get<std::uint32_t>(buf, body + 4);
      bits = get<std::uint16_t>(buf, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt || format != 1 || bits != 16 || channels == 0) {
        throw Error(ErrorCode::UnreadableMedia, "only 16-bit PCM wav is supported: " + path.string());
      }
      const std::size_t avail = std::min<std::size_t>(size, buf.size() - body);
      const std::size_t frames = avail / (2u * channels);
      AudioBuffer audio;
      audio.sample_rate = static_cast<int>(rate);
      audio.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        float acc = 0.0f;
        for (std::uint16_t c = 0; c < channels; ++c) {
          acc += static_cast<float>(get<std::int16_t>(buf, body + (f * channels + c) * 2)) / 32768.0f;
        }
        audio.samples[f] = acc / static_cast<float>(channels);
      }
      return audio;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorCode::UnreadableMedia, "wav has no data chunk: " + path.string());
}

}  // namespace mseva
