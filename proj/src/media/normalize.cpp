#include "mseva/media/normalize.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "libav_util.hpp"
#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"
#include "mseva/media/resolution.hpp"

extern char** environ;

namespace mseva::media {
namespace fs = std::filesystem;

namespace {

bool is_attached_picture(const AVStream* st) {
  return (st->disposition & AV_DISPOSITION_ATTACHED_PIC) != 0;
}

int find_video_stream(AVFormatContext* ctx) {
  for (unsigned i = 0; i < ctx->nb_streams; ++i) {
    const AVStream* st = ctx->streams[i];
    if (st->codecpar->codec_type == AVMEDIA_TYPE_VIDEO && !is_attached_picture(st)) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

int find_audio_stream(AVFormatContext* ctx) {
  for (unsigned i = 0; i < ctx->nb_streams; ++i) {
    if (ctx->streams[i]->codecpar->codec_type == AVMEDIA_TYPE_AUDIO) return static_cast<int>(i);
  }
  return -1;
}

Rational stream_fps(const AVStream* st) {
  AVRational r = st->avg_frame_rate;
  if (r.num <= 0 || r.den <= 0) r = st->r_frame_rate;
  if (r.num <= 0 || r.den <= 0) return {25, 1};
  return {r.num, r.den};
}

// Decoder send/receive loop shared by audio and video paths.
template <typename OnFrame>
void drain(AVCodecContext* dec, AVFrame* frame, OnFrame&& on_frame) {
  while (true) {
    const int err = avcodec_receive_frame(dec, frame);
    if (err == AVERROR(EAGAIN) || err == AVERROR_EOF) return;
    if (err < 0) throw Error(ErrorCode::UnreadableMedia, "decode: " + av::error_string(err));
    on_frame(frame);
    av_frame_unref(frame);
  }
}

template <typename OnFrame>
void decode_stream(AVFormatContext* in, int index, AVCodecContext* dec, OnFrame&& on_frame) {
  auto pkt = av::make_packet();
  auto frame = av::make_frame();
  while (av_read_frame(in, pkt.get()) >= 0) {
    if (pkt->stream_index == index) {
      const int err = avcodec_send_packet(dec, pkt.get());
      if (err < 0 && err != AVERROR(EAGAIN) && err != AVERROR_INVALIDDATA) {
        av_packet_unref(pkt.get());
        throw Error(ErrorCode::UnreadableMedia, "decode: " + av::error_string(err));
      }
      drain(dec, frame.get(), on_frame);
    }
    av_packet_unref(pkt.get());
  }
  avcodec_send_packet(dec, nullptr);
  drain(dec, frame.get(), on_frame);
}

}  // namespace

MediaInfo probe_media(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::UnreadableMedia, "no such file: " + path.string());
  auto in = av::open_input(path);
  MediaInfo info;
  for (unsigned i = 0; i < in->nb_streams; ++i) {
    const AVStream* st = in->streams[i];
    if (st->codecpar->codec_type == AVMEDIA_TYPE_AUDIO) ++info.audio_streams;
    if (st->codecpar->codec_type == AVMEDIA_TYPE_VIDEO && !is_attached_picture(st)) ++info.video_streams;
  }
  if (const int v = find_video_stream(in.get()); v >= 0) {
    const AVStream* st = in->streams[v];
    info.width_px = st->codecpar->width;
    info.height_px = st->codecpar->height;
    info.fps = stream_fps(st);
  }
  if (const int a = find_audio_stream(in.get()); a >= 0) {
    info.audio_sample_rate = in->streams[a]->codecpar->sample_rate;
    info.audio_channels = in->streams[a]->codecpar->channels;
  }
  if (in->duration != AV_NOPTS_VALUE && in->duration > 0) {
    info.duration_ms = av_rescale(in->duration, 1000, AV_TIME_BASE);
  } else {
    for (unsigned i = 0; i < in->nb_streams; ++i) {
      const AVStream* st = in->streams[i];
      if (st->duration == AV_NOPTS_VALUE) continue;
      info.duration_ms = std::max(info.duration_ms, av_rescale_q(st->duration, st->time_base, {1, 1000}));
    }
  }
  return info;
}

AudioBuffer decode_audio(const fs::path& path) {
  auto in = av::open_input(path);
  const int index = find_audio_stream(in.get());
  if (index < 0) throw Error(ErrorCode::NoAudioStream, path.string());
  auto dec = av::open_decoder(in->streams[index]);

  const bool passthrough = dec->codec_id == AV_CODEC_ID_PCM_S16LE && dec->channels == 1 &&
                           dec->sample_rate == kSampleRate;
  AudioBuffer out;
  av::SwrPtr swr;
  std::vector<std::int16_t> scratch;

  auto append = [&](const std::int16_t* pcm, int n) {
    for (int i = 0; i < n; ++i) out.samples.push_back(static_cast<float>(pcm[i]) / 32768.0f);
  };

  decode_stream(in.get(), index, dec.get(), [&](AVFrame* frame) {
    if (passthrough) {
      append(reinterpret_cast<const std::int16_t*>(frame->data[0]), frame->nb_samples);
      return;
    }
    if (!swr) {
      const std::int64_t layout = frame->channel_layout != 0
                                      ? static_cast<std::int64_t>(frame->channel_layout)
                                      : av_get_default_channel_layout(frame->channels);
      swr.reset(swr_alloc_set_opts(nullptr, AV_CH_LAYOUT_MONO, AV_SAMPLE_FMT_S16, kSampleRate, layout,
                                   static_cast<AVSampleFormat>(frame->format), frame->sample_rate, 0,
                                   nullptr));
      if (!swr || swr_init(swr.get()) < 0) throw Error(ErrorCode::UnreadableMedia, "resampler init");
    }
    const int cap = swr_get_out_samples(swr.get(), frame->nb_samples);
    scratch.resize(static_cast<std::size_t>(std::max(cap, 0)));
    auto* dst = reinterpret_cast<std::uint8_t*>(scratch.data());
    const int n = swr_convert(swr.get(), &dst, cap, const_cast<const std::uint8_t**>(frame->extended_data),
                              frame->nb_samples);
    if (n < 0) throw Error(ErrorCode::UnreadableMedia, "resample failed");
    append(scratch.data(), n);
  });

  if (swr) {
    scratch.resize(4096);
    auto* dst = reinterpret_cast<std::uint8_t*>(scratch.data());
    int n = 0;
    while ((n = swr_convert(swr.get(), &dst, static_cast<int>(scratch.size()), nullptr, 0)) > 0) {
      append(scratch.data(), n);
    }
  }
  return out;
}

namespace {

void transcode_video(const fs::path& input, const fs::path& out_video, int dst_w, int dst_h) {
  auto in = av::open_input(input);
  const int index = find_video_stream(in.get());
  if (index < 0) throw Error(ErrorCode::NoVideoStream, input.string());
  const AVStream* in_stream = in->streams[index];
  auto dec = av::open_decoder(in_stream);
  const int fps = std::max(1, static_cast<int>(std::lround(stream_fps(in_stream).value())));

  AVFormatContext* raw_out = nullptr;
  avformat_alloc_output_context2(&raw_out, nullptr, "avi", out_video.c_str());
  if (raw_out == nullptr) throw Error(ErrorCode::IoFailure, "cannot create " + out_video.string());
  av::OutputPtr out(raw_out);
  out->flags |= AVFMT_FLAG_BITEXACT;

  const AVCodec* codec = avcodec_find_encoder(AV_CODEC_ID_MJPEG);
  av::CodecPtr enc(avcodec_alloc_context3(codec));
  enc->width = dst_w;
  enc->height = dst_h;
  enc->pix_fmt = AV_PIX_FMT_YUVJ420P;
  enc->time_base = {1, fps};
  enc->thread_count = 1;
  enc->flags |= AV_CODEC_FLAG_QSCALE | AV_CODEC_FLAG_BITEXACT;
  enc->global_quality = FF_QP2LAMBDA * 2;
  if (out->oformat->flags & AVFMT_GLOBALHEADER) enc->flags |= AV_CODEC_FLAG_GLOBAL_HEADER;
  if (avcodec_open2(enc.get(), codec, nullptr) < 0) throw Error(ErrorCode::IoFailure, "mjpeg encoder");

  AVStream* out_stream = avformat_new_stream(out.get(), nullptr);
  avcodec_parameters_from_context(out_stream->codecpar, enc.get());
  out_stream->time_base = enc->time_base;
  if (avio_open(&out->pb, out_video.c_str(), AVIO_FLAG_WRITE) < 0) {
    throw Error(ErrorCode::IoFailure, "cannot open " + out_video.string());
  }
  if (avformat_write_header(out.get(), nullptr) < 0) throw Error(ErrorCode::IoFailure, "avi header");

  auto scaled = av::make_frame();
  scaled->format = enc->pix_fmt;
  scaled->width = dst_w;
  scaled->height = dst_h;
  av_frame_get_buffer(scaled.get(), 0);
  auto pkt = av::make_packet();
  av::SwsPtr sws;
  std::int64_t last_pts = -1;
  const std::int64_t start = in_stream->start_time == AV_NOPTS_VALUE ? 0 : in_stream->start_time;

  auto write_packets = [&](AVFrame* frame) {
    if (avcodec_send_frame(enc.get(), frame) < 0) throw Error(ErrorCode::IoFailure, "mjpeg encode");
    while (avcodec_receive_packet(enc.get(), pkt.get()) == 0) {
      av_packet_rescale_ts(pkt.get(), enc->time_base, out_stream->time_base);
      pkt->stream_index = out_stream->index;
      av_interleaved_write_frame(out.get(), pkt.get());
    }
  };

  decode_stream(in.get(), index, dec.get(), [&](AVFrame* frame) {
    sws.reset(sws_getCachedContext(sws.release(), frame->width, frame->height, static_cast<AVPixelFormat>(frame->format),
                               dst_w, dst_h, AV_PIX_FMT_YUVJ420P, SWS_BILINEAR | SWS_ACCURATE_RND,
                               nullptr, nullptr, nullptr));
    av_frame_make_writable(scaled.get());
    sws_scale(sws.get(), frame->data, frame->linesize, 0, frame->height, scaled->data, scaled->linesize);
    std::int64_t ts = frame->best_effort_timestamp == AV_NOPTS_VALUE ? last_pts + 1
                                                                     : frame->best_effort_timestamp - start;
    const double seconds = static_cast<double>(ts) * av_q2d(in_stream->time_base);
    std::int64_t pts = frame->best_effort_timestamp == AV_NOPTS_VALUE ? ts : std::llround(seconds * fps);
    pts = std::max(pts, last_pts + 1);
    last_pts = pts;
    scaled->pts = pts;
    scaled->quality = enc->global_quality;
    write_packets(scaled.get());
  });
  if (last_pts < 0) throw Error(ErrorCode::FrameDecodeFailure, "no decodable video frames in " + input.string());
  write_packets(nullptr);
  av_write_trailer(out.get());
}

}  // namespace

void LibavTranscoder::transcode(const fs::path& input, const fs::path& out_wav, const fs::path& out_video,
                                int dst_width, int dst_height) {
  write_wav(out_wav, decode_audio(input));
  transcode_video(input, out_video, dst_width, dst_height);
}

void ExternalTranscoder::transcode(const fs::path& input, const fs::path& out_wav, const fs::path& out_video,
                                   int dst_width, int dst_height) {
  std::vector<std::string> args = {binary_.string(), input.string(), out_wav.string(), out_video.string(),
                                   std::to_string(dst_width), std::to_string(dst_height)};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = 0;
  if (posix_spawnp(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0) {
    throw Error(ErrorCode::UnreadableMedia, "cannot launch transcoder " + binary_.string());
  }
  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::UnreadableMedia,
                "transcoder " + binary_.string() + " failed on " + input.string());
  }
  if (!fs::exists(out_wav) || !fs::exists(out_video)) {
    throw Error(ErrorCode::UnreadableMedia, "transcoder did not produce both outputs");
  }
}

std::unique_ptr<Transcoder> make_default_transcoder() {
  if (const char* bin = std::getenv("MSEVA_TRANSCODER"); bin != nullptr && *bin != '\0') {
    return std::make_unique<ExternalTranscoder>(bin);
  }
  return std::make_unique<LibavTranscoder>();
}

MediaAsset normalize_container(const fs::path& source_path, const fs::path& work_dir,
                               std::span<const ResolutionRule> rules, Transcoder& transcoder,
                               std::optional<std::string> language_hint) {
  const MediaInfo info = probe_media(source_path);
  if (info.audio_streams == 0) throw Error(ErrorCode::NoAudioStream, source_path.string());
  if (info.video_streams == 0) throw Error(ErrorCode::NoVideoStream, source_path.string());
  if (info.duration_ms <= 0 || info.width_px <= 0 || info.height_px <= 0) {
    throw Error(ErrorCode::UnreadableMedia, "missing duration or dimensions: " + source_path.string());
  }

  MediaAsset asset;
  asset.asset_id = sha256_file_hex(source_path).substr(0, 16);
  asset.source_path = source_path;
  asset.duration_ms = info.duration_ms;
  asset.width_px = info.width_px;
  asset.height_px = info.height_px;
  asset.fps = info.fps;
  asset.rule = select_resolution_rule(info.width_px, info.height_px, rules);
  asset.language_hint = std::move(language_hint);

  fs::create_directories(work_dir);
  asset.audio_path = work_dir / "audio.wav";
  asset.video_path = work_dir / "video.avi";
  transcoder.transcode(source_path, asset.audio_path, asset.video_path, asset.rule.dst_width,
                       asset.rule.dst_height);
  return asset;
}

}  // namespace mseva::media
