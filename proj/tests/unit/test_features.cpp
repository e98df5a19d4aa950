#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mseva/common/error.hpp"
#include "mseva/model/features.hpp"

using namespace mseva;
using namespace mseva::model;

namespace {

AudioBuffer noise(int samples, std::uint64_t seed, double amplitude = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  AudioBuffer a;
  a.samples.resize(static_cast<std::size_t>(samples));
  for (auto& s : a.samples) s = static_cast<float>(u(rng));
  return a;
}

// O(N^2) reference: explicit DFT per frame, triangular filters written as
// min of the two slopes.
Mat reference_log_mel(const AudioBuffer& clip, const MelSettings& s) {
  const int win = clip.sample_rate * s.window_ms / 1000;
  const int hop = clip.sample_rate * s.hop_ms / 1000;
  const int frames = 1 + (static_cast<int>(clip.samples.size()) - win) / hop;
  const int bins = s.fft_size / 2 + 1;
  const double m_lo = 2595.0 * std::log10(1.0 + s.f_min / 700.0);
  const double m_hi = 2595.0 * std::log10(1.0 + s.f_max / 700.0);
  std::vector<double> edge(static_cast<std::size_t>(s.mel_bins + 2));
  for (std::size_t i = 0; i < edge.size(); ++i) {
    const double mel = m_lo + (m_hi - m_lo) * static_cast<double>(i) / (s.mel_bins + 1);
    edge[i] = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  }
  Mat out(frames, s.mel_bins);
  for (int f = 0; f < frames; ++f) {
    std::vector<double> power(static_cast<std::size_t>(bins));
    for (int k = 0; k < bins; ++k) {
      double re = 0.0;
      double im = 0.0;
      for (int n = 0; n < win; ++n) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win);
        const double x = clip.samples[static_cast<std::size_t>(f * hop + n)] * w;
        const double phase = -2.0 * std::numbers::pi * k * n / s.fft_size;
        re += x * std::cos(phase);
        im += x * std::sin(phase);
      }
      power[static_cast<std::size_t>(k)] = re * re + im * im;
    }
    for (int m = 0; m < s.mel_bins; ++m) {
      const double lo = edge[static_cast<std::size_t>(m)];
      const double c = edge[static_cast<std::size_t>(m) + 1];
      const double hi = edge[static_cast<std::size_t>(m) + 2];
      double e = 0.0;
      for (int k = 0; k < bins; ++k) {
        const double hz = static_cast<double>(k) * clip.sample_rate / s.fft_size;
        const double weight = std::max(0.0, std::min((hz - lo) / (c - lo), (hi - hz) / (hi - c)));
        e += weight * power[static_cast<std::size_t>(k)];
      }
      out(f, m) = std::log(std::max(e, s.log_floor));
    }
  }
  return out;
}

}  // namespace

TEST(MelScale, HtkFormula) {
  EXPECT_NEAR(hz_to_mel(1000.0), 999.985, 1e-3);
  EXPECT_NEAR(hz_to_mel(0.0), 0.0, 1e-12);
  for (double hz : {50.0, 440.0, 3999.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
}

TEST(MelFilterbank, TrianglesPeakAtOne) {
  const MelSettings s;
  const Mat fb = mel_filterbank(s, 16000);
  ASSERT_EQ(fb.rows(), 64);
  ASSERT_EQ(fb.cols(), 257);
  EXPECT_GE(fb.minCoeff(), 0.0);
  EXPECT_LE(fb.maxCoeff(), 1.0 + 1e-12);
  for (int m = 0; m < fb.rows(); ++m) EXPECT_GT(fb.row(m).maxCoeff(), 0.0) << "empty filter " << m;
}

TEST(LogMel, MatchesNaiveDft) {
  MelSettings s;
  const AudioBuffer clip = noise(2400, 3);
  const Mat fast = log_mel_spectrogram(clip, s);
  const Mat slow = reference_log_mel(clip, s);
  ASSERT_EQ(fast.rows(), slow.rows());
  ASSERT_EQ(fast.cols(), slow.cols());
  EXPECT_LT((fast - slow).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LogMel, OneSecondTiling) {
  const MelSettings s;
  const AudioBuffer clip = noise(16000, 4);
  const Mat mel = log_mel_spectrogram(clip, s);
  EXPECT_EQ(mel.rows(), 98);
  EXPECT_EQ(mel.cols(), 64);
  const Mat padded = pad_to_patches(mel, 16);
  EXPECT_EQ(padded.rows(), 112);
  EXPECT_EQ(padded.topRows(98), mel);
  EXPECT_TRUE(padded.bottomRows(14).isZero());
  const auto tiles = tile_patches(padded, 16);
  ASSERT_EQ(tiles.size(), 16u);
  for (const auto& t : tiles) EXPECT_EQ(t.rows(), 7);
  EXPECT_EQ(untile_patches(tiles), padded);
}

TEST(LogMel, TilingInverseForManyLengths) {
  const MelSettings s;
  for (int samples : {400, 560, 4000, 9999, 33333}) {
    const Mat padded = pad_to_patches(log_mel_spectrogram(noise(samples, 5), s), 16);
    EXPECT_EQ(padded.rows() % 16, 0);
    EXPECT_GE(padded.rows(), 16);
    EXPECT_EQ(untile_patches(tile_patches(padded, 16)), padded);
  }
}

TEST(LogMel, ZeroClipIsFinite) {
  AudioBuffer clip;
  clip.samples.assign(16000, 0.0f);
  const Mat mel = log_mel_spectrogram(clip, MelSettings{});
  EXPECT_TRUE(mel.allFinite());
  EXPECT_NEAR(mel.maxCoeff(), std::log(1e-10), 1e-12);
  EXPECT_TRUE(normalize_bins(mel).allFinite());
}

TEST(LogMel, TooShort) {
  try {
    log_mel_spectrogram(noise(399, 1), MelSettings{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ClipTooShort);
  }
}

TEST(NormalizeBins, ZeroMeanUnitVariance) {
  const Mat n = normalize_bins(log_mel_spectrogram(noise(8000, 6), MelSettings{}));
  for (int c = 0; c < n.cols(); ++c) {
    EXPECT_NEAR(n.col(c).mean(), 0.0, 1e-9);
    EXPECT_NEAR(n.col(c).array().square().mean(), 1.0, 1e-6);
  }
}
