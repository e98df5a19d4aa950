#include "fixtures.hpp"

extern "C" {
#include <libavutil/channel_layout.h>
#include <libavutil/opt.h>
}

#include <cmath>
#include <numbers>
#include <atomic>
#include <random>

#include <unistd.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "libav_util.hpp"

namespace mseva::testkit {

namespace fs = std::filesystem;
using namespace mseva::media;

AudioBuffer synth_speech(std::int64_t duration_ms, const std::vector<Span>& bursts, int sample_rate,
                         std::uint64_t seed) {
  AudioBuffer out;
  out.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(duration_ms * sample_rate / 1000);
  out.samples.assign(n, 0.0F);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-1e-3, 1e-3);
  for (auto& s : out.samples) s = static_cast<float>(noise(rng));
  std::uniform_real_distribution<double> pitch(110.0, 220.0);
  for (const auto& [start, end] : bursts) {
    const double f0 = pitch(rng);
    const auto a = static_cast<std::size_t>(start * sample_rate / 1000);
    const auto b = std::min(n, static_cast<std::size_t>(end * sample_rate / 1000));
    for (std::size_t i = a; i < b; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      // a few harmonics with a slow syllable-rate wobble that never dips far
      const double env = 0.8 + 0.2 * std::sin(2.0 * std::numbers::pi * 4.0 * t);
      double v = 0.0;
      for (int h = 1; h <= 4; ++h) v += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
      out.samples[i] = static_cast<float>(0.18 * env * v);
    }
  }
  return out;
}

namespace {

void check(int err, const std::string& what) {
  if (err < 0) throw std::runtime_error(what + ": " + av::error_string(err));
}

void drain(AVCodecContext* enc, AVStream* stream, AVFormatContext* out) {
  auto pkt = av::make_packet();
  while (true) {
    const int err = avcodec_receive_packet(enc, pkt.get());
    if (err == AVERROR(EAGAIN) || err == AVERROR_EOF) return;
    check(err, "receive_packet");
    av_packet_rescale_ts(pkt.get(), enc->time_base, stream->time_base);
    pkt->stream_index = stream->index;
    check(av_interleaved_write_frame(out, pkt.get()), "write_frame");
  }
}

cv::Mat render_frame(const VideoSpec& spec, const cv::Mat& face, int index) {
  cv::Mat bgr(spec.height, spec.width, CV_8UC3, cv::Scalar(96, 112, 128));
  if (!face.empty()) {
    face.copyTo(bgr(cv::Rect((spec.width - face.cols) / 2, (spec.height - face.rows) / 2, face.cols, face.rows)));
  }
  const int x = (index * 7) % std::max(1, spec.width - 24);
  cv::rectangle(bgr, cv::Rect(x, spec.height - 24, 20, 20), cv::Scalar(20, 200, 240), cv::FILLED);
  return bgr;
}

}  // namespace

void write_video(const fs::path& path, const VideoSpec& spec) {
  av_log_set_level(AV_LOG_ERROR);
  AVFormatContext* raw = nullptr;
  check(avformat_alloc_output_context2(&raw, nullptr, nullptr, path.c_str()), "alloc output");
  av::OutputPtr out(raw);
  out->flags |= AVFMT_FLAG_BITEXACT;

  av::CodecPtr venc;
  av::CodecPtr aenc;
  AVStream* vst = nullptr;
  AVStream* ast = nullptr;

  if (spec.with_video) {
    const AVCodec* codec = avcodec_find_encoder(AV_CODEC_ID_MPEG4);
    venc.reset(avcodec_alloc_context3(codec));
    venc->width = spec.width;
    venc->height = spec.height;
    venc->pix_fmt = AV_PIX_FMT_YUV420P;
    venc->time_base = AVRational{1, spec.fps};
    venc->framerate = AVRational{spec.fps, 1};
    venc->gop_size = 12;
    venc->bit_rate = 800000;
    venc->thread_count = 1;
    venc->flags |= AV_CODEC_FLAG_BITEXACT;
    if (out->oformat->flags & AVFMT_GLOBALHEADER) venc->flags |= AV_CODEC_FLAG_GLOBAL_HEADER;
    check(avcodec_open2(venc.get(), codec, nullptr), "open video encoder");
    vst = avformat_new_stream(out.get(), nullptr);
    vst->time_base = venc->time_base;
    check(avcodec_parameters_from_context(vst->codecpar, venc.get()), "video params");
  }
  if (spec.with_audio) {
    const bool pcm = spec.audio_codec == "pcm_s16le";
    const AVCodec* codec = avcodec_find_encoder(pcm ? AV_CODEC_ID_PCM_S16LE : AV_CODEC_ID_AAC);
    aenc.reset(avcodec_alloc_context3(codec));
    aenc->sample_rate = spec.sample_rate;
    aenc->channels = spec.channels;
    aenc->channel_layout = static_cast<std::uint64_t>(av_get_default_channel_layout(spec.channels));
    aenc->sample_fmt = pcm ? AV_SAMPLE_FMT_S16 : AV_SAMPLE_FMT_FLTP;
    aenc->bit_rate = pcm ? 0 : 128000;
    aenc->time_base = AVRational{1, spec.sample_rate};
    aenc->flags |= AV_CODEC_FLAG_BITEXACT;
    if (out->oformat->flags & AVFMT_GLOBALHEADER) aenc->flags |= AV_CODEC_FLAG_GLOBAL_HEADER;
    check(avcodec_open2(aenc.get(), codec, nullptr), "open audio encoder");
    ast = avformat_new_stream(out.get(), nullptr);
    ast->time_base = aenc->time_base;
    check(avcodec_parameters_from_context(ast->codecpar, aenc.get()), "audio params");
  }

  check(avio_open(&out->pb, path.c_str(), AVIO_FLAG_WRITE), "open file");
  check(avformat_write_header(out.get(), nullptr), "write header");

  cv::Mat face;
  if (!spec.face_image.empty()) {
    face = cv::imread(spec.face_image.string(), cv::IMREAD_COLOR);
    if (face.empty()) throw std::runtime_error("cannot read " + spec.face_image.string());
    const int side = std::min(spec.width, spec.height) * 9 / 10;
    cv::resize(face, face, cv::Size(side, side), 0, 0, cv::INTER_AREA);
  }
  const AudioBuffer audio = synth_speech(spec.duration_ms, spec.bursts, spec.sample_rate, spec.seed);

  const std::int64_t video_frames = spec.duration_ms * spec.fps / 1000;
  const int audio_chunk = aenc && aenc->frame_size > 0 ? aenc->frame_size : 1024;
  const auto audio_total = static_cast<std::int64_t>(audio.samples.size());
  std::int64_t next_video = 0;
  std::int64_t next_audio = 0;
  av::SwsPtr sws(sws_getContext(spec.width, spec.height, AV_PIX_FMT_BGR24, spec.width, spec.height,
                                AV_PIX_FMT_YUV420P, SWS_BILINEAR | SWS_BITEXACT, nullptr, nullptr, nullptr));
  auto frame = av::make_frame();

  while ((venc && next_video < video_frames) || (aenc && next_audio < audio_total)) {
    const bool take_video =
        venc && next_video < video_frames &&
        (!aenc || next_audio >= audio_total || next_video * spec.sample_rate <= next_audio * spec.fps);
    av_frame_unref(frame.get());
    if (take_video) {
      const cv::Mat bgr = render_frame(spec, face, static_cast<int>(next_video));
      frame->format = AV_PIX_FMT_YUV420P;
      frame->width = spec.width;
      frame->height = spec.height;
      check(av_frame_get_buffer(frame.get(), 0), "video buffer");
      const std::uint8_t* src[1] = {bgr.data};
      const int stride[1] = {static_cast<int>(bgr.step)};
      sws_scale(sws.get(), src, stride, 0, spec.height, frame->data, frame->linesize);
      frame->pts = next_video++;
      check(avcodec_send_frame(venc.get(), frame.get()), "send video");
      drain(venc.get(), vst, out.get());
    } else {
      const int n = static_cast<int>(std::min<std::int64_t>(audio_chunk, audio_total - next_audio));
      frame->format = aenc->sample_fmt;
      frame->nb_samples = n;
      frame->channels = spec.channels;
      frame->channel_layout = aenc->channel_layout;
      frame->sample_rate = spec.sample_rate;
      check(av_frame_get_buffer(frame.get(), 0), "audio buffer");
      for (int i = 0; i < n; ++i) {
        const float v = audio.samples[static_cast<std::size_t>(next_audio + i)];
        for (int c = 0; c < spec.channels; ++c) {
          if (aenc->sample_fmt == AV_SAMPLE_FMT_FLTP) {
            reinterpret_cast<float*>(frame->data[c])[i] = v;
          } else {
            reinterpret_cast<std::int16_t*>(frame->data[0])[i * spec.channels + c] = to_pcm16(v);
          }
        }
      }
      frame->pts = next_audio;
      next_audio += n;
      check(avcodec_send_frame(aenc.get(), frame.get()), "send audio");
      drain(aenc.get(), ast, out.get());
    }
  }
  if (venc) {
    check(avcodec_send_frame(venc.get(), nullptr), "flush video");
    drain(venc.get(), vst, out.get());
  }
  if (aenc) {
    check(avcodec_send_frame(aenc.get(), nullptr), "flush audio");
    drain(aenc.get(), ast, out.get());
  }
  check(av_write_trailer(out.get()), "write trailer");
}

fs::path test_data_dir() { return MSEVA_TEST_DATA_DIR; }

fs::path make_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = fs::temp_directory_path() /
                   ("mseva-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace mseva::testkit
