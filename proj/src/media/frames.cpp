#include "mseva/media/frames.hpp"

#include <algorithm>

#include <opencv2/imgproc.hpp>

#include "libav_util.hpp"
#include "mseva/common/error.hpp"

namespace mseva::media {

std::vector<std::int64_t> frame_timestamps(std::int64_t duration_ms, const FramePolicy& policy) {
  if (duration_ms <= 0) throw Error(ErrorCode::InvariantViolation, "asset duration must be positive");
  std::vector<std::int64_t> ts;
  if (const auto* fixed = std::get_if<FixedCount>(&policy)) {
    if (fixed->count < 1) throw Error(ErrorCode::InvalidConfig, "fixed_count must be >= 1");
    for (int i = 0; i < fixed->count; ++i) ts.push_back(i * duration_ms / fixed->count);
    // short clips with many frames can collide on the millisecond grid
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  } else {
    const auto interval = std::get<FixedInterval>(policy).interval_ms;
    if (interval <= 0) throw Error(ErrorCode::InvalidConfig, "interval_ms must be > 0");
    for (std::int64_t t = 0; t <= duration_ms; t += interval) ts.push_back(t);
  }
  return ts;
}

FrameBatch extract_frames(const MediaAsset& asset, const FramePolicy& policy) {
  FrameBatch batch;
  batch.asset_id = asset.asset_id;
  batch.timestamps_ms = frame_timestamps(asset.duration_ms, policy);

  av::InputPtr in;
  try {
    in = av::open_input(asset.video_path);
  } catch (const Error& e) {
    throw Error(ErrorCode::FrameDecodeFailure, e.detail());
  }
  const int index = av_find_best_stream(in.get(), AVMEDIA_TYPE_VIDEO, -1, -1, nullptr, 0);
  if (index < 0) throw Error(ErrorCode::FrameDecodeFailure, "no video stream in " + asset.video_path.string());
  const AVStream* st = in->streams[index];
  auto dec = av::open_decoder(st);

  const int dst_w = asset.rule.dst_width;
  const int dst_h = asset.rule.dst_height;
  av::SwsPtr sws;
  cv::Mat current;  // most recent decoded frame (RGB, target size)
  std::int64_t current_ms = -1;
  std::size_t next = 0;
  const auto& want = batch.timestamps_ms;

  auto on_frame = [&](AVFrame* frame) {
    const std::int64_t pts = frame->best_effort_timestamp;
    const std::int64_t ms = pts == AV_NOPTS_VALUE ? current_ms + 1 : av_rescale_q(pts, st->time_base, {1, 1000});
    cv::Mat rgb(frame->height, frame->width, CV_8UC3);
    sws.reset(sws_getCachedContext(sws.release(), frame->width, frame->height,
                                   static_cast<AVPixelFormat>(frame->format), frame->width, frame->height,
                                   AV_PIX_FMT_RGB24, SWS_BILINEAR | SWS_ACCURATE_RND | SWS_BITEXACT, nullptr, nullptr, nullptr));
    std::uint8_t* dst[] = {rgb.data};
    const int stride[] = {static_cast<int>(rgb.step)};
    sws_scale(sws.get(), frame->data, frame->linesize, 0, frame->height, dst, stride);
    if (rgb.cols != dst_w || rgb.rows != dst_h) cv::resize(rgb, rgb, {dst_w, dst_h}, 0, 0, cv::INTER_AREA);
    // requests before this frame's pts show the previous frame; requests
    // before the very first frame show the first frame
    while (next < want.size() && want[next] < ms) {
      batch.frames.push_back(current.empty() ? rgb.clone() : current.clone());
      ++next;
    }
    current = std::move(rgb);
    current_ms = ms;
  };

  auto pkt = av::make_packet();
  auto frame = av::make_frame();
  try {
    while (next < want.size() && av_read_frame(in.get(), pkt.get()) >= 0) {
      if (pkt->stream_index == index && avcodec_send_packet(dec.get(), pkt.get()) >= 0) {
        while (avcodec_receive_frame(dec.get(), frame.get()) == 0) {
          on_frame(frame.get());
          av_frame_unref(frame.get());
        }
      }
      av_packet_unref(pkt.get());
    }
    avcodec_send_packet(dec.get(), nullptr);
    while (avcodec_receive_frame(dec.get(), frame.get()) == 0) {
      on_frame(frame.get());
      av_frame_unref(frame.get());
    }
  } catch (const Error& e) {
    throw Error(ErrorCode::FrameDecodeFailure, e.detail());
  }

  // the last decoded frame stays on screen until the end of the clip
  while (next < want.size() && !current.empty()) {
    batch.frames.push_back(current.clone());
    ++next;
  }
  if (batch.frames.size() != want.size()) {
    throw Error(ErrorCode::FrameDecodeFailure, "decoded " + std::to_string(batch.frames.size()) + " of " +
                                                   std::to_string(want.size()) + " frames from " +
                                                   asset.video_path.string());
  }
  return batch;
}

}  // namespace mseva::media
