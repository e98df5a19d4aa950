#pragma once

#include <cstdint>
#include <vector>

#include "mseva/media/types.hpp"

namespace mseva::media {

/// Timestamps a policy selects for a clip of `duration_ms`:
/// fixed count N -> floor(i * duration / N) for i in [0, N);
/// interval T    -> i * T for i in [0, floor(duration / T)].
std::vector<std::int64_t> frame_timestamps(std::int64_t duration_ms, const FramePolicy& policy);

/// Decodes the asset's normalized video and returns, for every timestamp,
/// the frame on screen at that instant, resized to the asset's target
/// resolution. Throws Error{FrameDecodeFailure}; never returns a partial batch.
FrameBatch extract_frames(const MediaAsset& asset, const FramePolicy& policy);

}  // namespace mseva::media
