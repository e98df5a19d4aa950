#include "mseva/segmenter/segmenter.hpp"

#include <algorithm>
#include <cmath>

#include "mseva/common/error.hpp"

namespace mseva::segmenter {

void SilenceProfile::validate() const {
  if (min_silence_ms <= 0) throw Error(ErrorCode::InvalidConfig, "min_silence_ms must be > 0");
  if (window_ms <= 0) throw Error(ErrorCode::InvalidConfig, "window_ms must be > 0");
  if (min_segment_ms >= max_segment_ms) {
    throw Error(ErrorCode::InvalidConfig, "min_segment_ms must be < max_segment_ms");
  }
}

Envelope energy_envelope(const AudioBuffer& audio, std::int64_t window_ms) {
  if (audio.samples.empty()) throw Error(ErrorCode::EmptyAudio, "no samples");
  if (window_ms <= 0) throw Error(ErrorCode::InvalidConfig, "window_ms must be > 0");

  const auto per_window = static_cast<std::size_t>(window_ms * audio.sample_rate / 1000);
  const std::int64_t duration = audio.duration_ms();
  Envelope env;
  env.reserve(audio.samples.size() / std::max<std::size_t>(per_window, 1) + 1);
  for (std::size_t begin = 0, i = 0; begin < audio.samples.size(); begin += per_window, ++i) {
    const std::int64_t start_ms = static_cast<std::int64_t>(i) * window_ms;
    const std::int64_t end_ms = std::min(start_ms + window_ms, duration);
    if (end_ms <= start_ms) break;  // sub-millisecond tail
    const std::size_t end = std::min(begin + per_window, audio.samples.size());
    double energy = 0.0;
    for (std::size_t s = begin; s < end; ++s) energy += static_cast<double>(audio.samples[s]) * audio.samples[s];
    const double rms = std::sqrt(energy / static_cast<double>(end - begin));
    const double db = rms > 0.0 ? std::max(20.0 * std::log10(rms), kDbFloor) : kDbFloor;
    env.push_back({start_ms, end_ms, db});
  }
  return env;
}

std::vector<SilenceRun> detect_silence_runs(const Envelope& envelope, const SilenceProfile& profile) {
  std::vector<SilenceRun> runs;
  std::optional<SilenceRun> open;
  auto close = [&] {
    if (open && open->length_ms() >= profile.min_silence_ms) runs.push_back(*open);
    open.reset();
  };
  for (const auto& w : envelope) {
    if (w.rms_db < profile.silence_floor_db) {
      if (open) open->end_ms = w.end_ms;
      else open = SilenceRun{w.start_ms, w.end_ms};
    } else {
      close();
    }
  }
  close();
  return runs;
}

namespace {

struct Span {
  std::int64_t start;
  std::int64_t end;
  std::int64_t length() const { return end - start; }
};

void split_long(Span span, const SilenceProfile& profile, const Envelope* envelope, std::vector<Span>& out) {
  if (span.length() <= profile.max_segment_ms) {
    out.push_back(span);
    return;
  }
  std::optional<std::int64_t> cut;
  if (envelope != nullptr) {
    double weakest = 0.0;
    for (const auto& w : *envelope) {
      if (w.start_ms - span.start < profile.min_segment_ms) continue;
      if (span.end - w.start_ms < profile.min_segment_ms) break;
      if (!cut || w.rms_db < weakest) {
        cut = w.start_ms;
        weakest = w.rms_db;
      }
    }
  }
  if (!cut) {
    const std::int64_t mid = span.start + span.length() / 2;
    cut = std::max(span.start + 1, mid - mid % profile.window_ms);
  }
  split_long({span.start, *cut}, profile, envelope, out);
  split_long({*cut, span.end}, profile, envelope, out);
}

}  // namespace

std::vector<UtteranceSegment> plan_segments(std::int64_t duration_ms, std::span<const SilenceRun> runs,
                                            const SilenceProfile& profile, const Envelope* envelope) {
  profile.validate();
  if (duration_ms <= 0) return {};

  std::vector<Span> spans;
  std::int64_t cursor = 0;
  for (const auto& run : runs) {
    const std::int64_t s = std::clamp(run.start_ms, std::int64_t{0}, duration_ms);
    const std::int64_t e = std::clamp(run.end_ms, std::int64_t{0}, duration_ms);
    if (s > cursor) spans.push_back({cursor, s});
    cursor = std::max(cursor, e);
  }
  if (cursor < duration_ms) spans.push_back({cursor, duration_ms});

  if (envelope != nullptr) {
    std::vector<Span> voiced;
    for (const auto& span : spans) {
      std::optional<Span> hull;
      for (const auto& w : *envelope) {
        if (w.end_ms <= span.start) continue;
        if (w.start_ms >= span.end) break;
        if (w.rms_db < profile.silence_floor_db) continue;
        const Span piece{std::max(w.start_ms, span.start), std::min(w.end_ms, span.end)};
        if (hull) hull->end = piece.end;
        else hull = piece;
      }
      if (hull) voiced.push_back(*hull);
    }
    spans = std::move(voiced);
  }

  std::vector<Span> groups;
  bool open = false;
  for (const auto& span : spans) {
    if (open) groups.back().end = span.end;
    else groups.push_back(span);
    open = groups.back().length() < profile.min_segment_ms;
  }
  if (open && groups.size() > 1) {
    const std::int64_t tail_end = groups.back().end;
    groups.pop_back();
    groups.back().end = tail_end;
  }

  std::vector<Span> bounded;
  for (const auto& g : groups) split_long(g, profile, envelope, bounded);

  std::vector<UtteranceSegment> segments;
  segments.reserve(bounded.size());
  for (const auto& b : bounded) {
    segments.push_back({static_cast<int>(segments.size()), b.start, b.end, {}});
  }
  return segments;
}

std::vector<AudioBuffer> cut_audio(const AudioBuffer& audio, std::span<const UtteranceSegment> segments) {
  const std::int64_t duration = audio.duration_ms();
  const std::int64_t per_ms = audio.sample_rate / 1000;
  std::vector<AudioBuffer> clips;
  clips.reserve(segments.size());
  for (const auto& seg : segments) {
    if (seg.start_ms < 0 || seg.start_ms >= seg.end_ms || seg.end_ms > duration) {
      throw Error(ErrorCode::SegmentOutOfRange,
                  "segment " + std::to_string(seg.index) + " [" + std::to_string(seg.start_ms) + ", " +
                      std::to_string(seg.end_ms) + ") outside [0, " + std::to_string(duration) + ")");
    }
    const auto first = static_cast<std::size_t>(seg.start_ms * per_ms);
    const auto last = seg.end_ms == duration ? audio.samples.size()
                                             : static_cast<std::size_t>(seg.end_ms * per_ms);
    AudioBuffer clip;
    clip.sample_rate = audio.sample_rate;
    clip.samples.assign(audio.samples.begin() + static_cast<std::ptrdiff_t>(first),
                        audio.samples.begin() + static_cast<std::ptrdiff_t>(last));
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::vector<UtteranceSegment> segment_audio(const AudioBuffer& audio, const SilenceProfile& profile) {
  profile.validate();
  const Envelope env = energy_envelope(audio, profile.window_ms);
  const auto runs = detect_silence_runs(env, profile);
  return plan_segments(audio.duration_ms(), runs, profile, &env);
}

}  // namespace mseva::segmenter
