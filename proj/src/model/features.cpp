#include "mseva/model/features.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "mseva/common/error.hpp"

namespace mseva::model {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Mat mel_filterbank(const MelSettings& s, int sample_rate) {
  const int bins = s.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(s.f_min);
  const double mel_hi = hz_to_mel(s.f_max);
  std::vector<double> edges(static_cast<std::size_t>(s.mel_bins + 2));
  for (int i = 0; i < s.mel_bins + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (s.mel_bins + 1));
  }
  Mat fb = Mat::Zero(s.mel_bins, bins);
  for (int m = 0; m < s.mel_bins; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double centre = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / s.fft_size;
      if (f > lo && f < centre) fb(m, k) = (f - lo) / (centre - lo);
      else if (f >= centre && f < hi) fb(m, k) = (hi - f) / (hi - centre);
    }
  }
  return fb;
}

namespace {

struct FftPlan {
  int size = 0;
  fftw_plan plan = nullptr;
};

// FFTW planning is not thread-safe; executing an existing plan on other
// fftw_malloc'd buffers is.
const FftPlan& plan_for(int size) {
  static std::mutex mutex;
  static std::vector<std::unique_ptr<FftPlan>> plans;
  std::lock_guard lock(mutex);
  for (const auto& p : plans) {
    if (p->size == size) return *p;
  }
  auto* in = fftw_alloc_real(static_cast<std::size_t>(size));
  auto* out = fftw_alloc_complex(static_cast<std::size_t>(size / 2 + 1));
  auto p = std::make_unique<FftPlan>();
  p->size = size;
  p->plan = fftw_plan_dft_r2c_1d(size, in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  plans.push_back(std::move(p));
  return *plans.back();
}

}  // namespace

Mat log_mel_spectrogram(const AudioBuffer& clip, const MelSettings& s) {
  const int win = clip.sample_rate * s.window_ms / 1000;
  const int hop = clip.sample_rate * s.hop_ms / 1000;
  const auto n = static_cast<int>(clip.samples.size());
  if (n < win) {
    throw Error(ErrorCode::ClipTooShort, std::to_string(n) + " samples is shorter than one " +
                                             std::to_string(win) + "-sample mel window");
  }
  if (win > s.fft_size) throw Error(ErrorCode::InvalidConfig, "mel window longer than FFT size");

  const int frames = 1 + (n - win) / hop;
  const int bins = s.fft_size / 2 + 1;
  const Mat fb = mel_filterbank(s, clip.sample_rate);
  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
  }

  const FftPlan& plan = plan_for(s.fft_size);
  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(static_cast<std::size_t>(s.fft_size)),
                                                   fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(
      fftw_alloc_complex(static_cast<std::size_t>(bins)), fftw_free);

  Mat power(bins, frames);
  for (int f = 0; f < frames; ++f) {
    double* buf = in.get();
    for (int i = 0; i < s.fft_size; ++i) {
      buf[i] = i < win ? static_cast<double>(clip.samples[static_cast<std::size_t>(f * hop + i)]) *
                             window[static_cast<std::size_t>(i)]
                       : 0.0;
    }
    fftw_execute_dft_r2c(plan.plan, buf, out.get());
    for (int k = 0; k < bins; ++k) {
      const double re = out.get()[k][0];
      const double im = out.get()[k][1];
      power(k, f) = re * re + im * im;
    }
  }
  Mat mel = (fb * power).transpose();
  return mel.array().max(s.log_floor).log().matrix();
}

Mat pad_to_patches(const Mat& spectrogram, int patches) {
  if (patches <= 0) throw Error(ErrorCode::InvalidConfig, "audio_patches must be positive");
  const auto rows = spectrogram.rows();
  const auto padded_rows = ((rows + patches - 1) / patches) * patches;
  Mat out = Mat::Zero(std::max<Eigen::Index>(padded_rows, patches), spectrogram.cols());
  out.topRows(rows) = spectrogram;
  return out;
}

std::vector<Mat> tile_patches(const Mat& padded, int patches) {
  if (padded.rows() % patches != 0) throw Error(ErrorCode::ShapeMismatch, "spectrogram not padded to patch grid");
  const auto width = padded.rows() / patches;
  std::vector<Mat> tiles;
  tiles.reserve(static_cast<std::size_t>(patches));
  for (int p = 0; p < patches; ++p) tiles.emplace_back(padded.middleRows(p * width, width));
  return tiles;
}

Mat untile_patches(const std::vector<Mat>& tiles) {
  if (tiles.empty()) return {};
  const auto width = tiles.front().rows();
  Mat out(width * static_cast<Eigen::Index>(tiles.size()), tiles.front().cols());
  for (std::size_t p = 0; p < tiles.size(); ++p) {
    out.middleRows(static_cast<Eigen::Index>(p) * width, width) = tiles[p];
  }
  return out;
}

Mat normalize_bins(const Mat& spectrogram) {
  const RowVec mean = spectrogram.colwise().mean();
  Mat centred = spectrogram.rowwise() - mean;
  const RowVec sd = (centred.array().square().colwise().mean() + 1e-8).sqrt().matrix();
  return centred.array().rowwise() / sd.array();
}

}  // namespace mseva::model
