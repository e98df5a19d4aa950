#include "segmentation_fixture.hpp"

#include <random>

namespace mseva::testkit {

SegmentationFixture make_segmentation_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto grid = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo / 10, hi / 10)(rng) * 10;
  };
  SegmentationFixture f;
  const int bursts = std::uniform_int_distribution<int>(2, 6)(rng);
  std::int64_t t = grid(0, 600);
  for (int i = 0; i < bursts; ++i) {
    const std::int64_t len = grid(300, 2500);
    f.bursts.push_back({t, t + len});
    t += len;
    if (i + 1 < bursts) {
      std::int64_t gap = 0;
      switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
        case 0: gap = 790; break;
        case 1: gap = 800; break;
        case 2: gap = grid(100, 780); break;
        default: gap = grid(810, 2500); break;
      }
      f.gaps.push_back({t, t + gap});
      t += gap;
    }
  }
  f.duration_ms = t + grid(0, 1200);
  f.audio = synth_speech(f.duration_ms, f.bursts, kSampleRate, seed * 7919 + 1);
  return f;
}

std::vector<std::string> check_boundaries(const SegmentationFixture& f,
                                          const std::vector<segmenter::UtteranceSegment>& segments,
                                          std::int64_t min_silence_ms, std::int64_t tol_ms) {
  std::vector<std::string> errors;
  auto near = [&](std::int64_t a, std::int64_t b) { return std::llabs(a - b) <= tol_ms; };
  for (const auto& [g0, g1] : f.gaps) {
    const std::string where = "gap [" + std::to_string(g0) + ", " + std::to_string(g1) + ")";
    if (g1 - g0 >= min_silence_ms) {
      bool end_ok = false;
      bool start_ok = false;
      for (const auto& s : segments) {
        end_ok = end_ok || near(s.end_ms, g0);
        start_ok = start_ok || near(s.start_ms, g1);
      }
      if (!end_ok) errors.push_back(where + ": no segment ends at its start");
      if (!start_ok) errors.push_back(where + ": no segment starts at its end");
    } else {
      bool inside = false;
      for (const auto& s : segments) inside = inside || (s.start_ms < g0 && s.end_ms > g1);
      if (!inside) errors.push_back(where + ": short gap produced a boundary");
    }
  }
  return errors;
}

}  // namespace mseva::testkit
