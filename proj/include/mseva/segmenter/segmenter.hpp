#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mseva/common/wav.hpp"

namespace mseva::segmenter {

inline constexpr double kDbFloor = -120.0;

struct SilenceProfile {
  std::int64_t min_silence_ms = 800;
  double silence_floor_db = -40.0;
  std::int64_t window_ms = 10;
  std::int64_t min_segment_ms = 300;
  std::int64_t max_segment_ms = 30000;

  /// Throws Error{InvalidConfig}.
  void validate() const;
};

struct EnvelopePoint {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  double rms_db = kDbFloor;
};
using Envelope = std::vector<EnvelopePoint>;

struct SilenceRun {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::int64_t length_ms() const { return end_ms - start_ms; }
  bool operator==(const SilenceRun&) const = default;
};

struct UtteranceSegment {
  int index = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::string text;

  std::int64_t duration_ms() const { return end_ms - start_ms; }
  bool operator==(const UtteranceSegment&) const = default;
};

/// RMS level in dBFS of consecutive non-overlapping windows; the trailing
/// partial window is kept. Digital silence maps to -120 dB.
/// Throws Error{EmptyAudio}.
Envelope energy_envelope(const AudioBuffer& audio, std::int64_t window_ms);

/// Maximal runs of windows below the floor lasting at least min_silence_ms.
std::vector<SilenceRun> detect_silence_runs(const Envelope& envelope, const SilenceProfile& profile);

/// Turns silence runs into utterance spans.
///
/// Spans are the complements of `runs` in [0, duration]. With an envelope,
/// each span is tightened to its outermost windows at or above the floor and
/// spans without any such window are discarded. Consecutive spans are then
/// grouped greedily from the left: a group closes once it reaches
/// min_segment_ms, and a short trailing group joins the one before it.
/// Finally any group longer than max_segment_ms is split at its quietest
/// interior window (midpoint when no envelope is given), recursively.
std::vector<UtteranceSegment> plan_segments(std::int64_t duration_ms, std::span<const SilenceRun> runs,
                                            const SilenceProfile& profile,
                                            const Envelope* envelope = nullptr);

/// One clip per segment: samples [start_ms * 16, end_ms * 16). A segment
/// ending at the buffer's last millisecond also takes the sub-millisecond tail.
/// Throws Error{SegmentOutOfRange}.
std::vector<AudioBuffer> cut_audio(const AudioBuffer& audio, std::span<const UtteranceSegment> segments);

/// energy_envelope -> detect_silence_runs -> plan_segments.
std::vector<UtteranceSegment> segment_audio(const AudioBuffer& audio, const SilenceProfile& profile);

}  // namespace mseva::segmenter
