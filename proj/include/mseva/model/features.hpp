#pragma once

#include <vector>

#include "mseva/common/wav.hpp"
#include "mseva/model/graph.hpp"

namespace mseva::model {

struct MelSettings {
  int mel_bins = 64;
  int window_ms = 25;
  int hop_ms = 10;
  int fft_size = 512;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
};

/// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// mel_bins x (fft_size / 2 + 1) triangular filters on the power spectrum.
Mat mel_filterbank(const MelSettings& s, int sample_rate);

/// Frames x mel_bins log-mel energies: periodic Hann window, power spectrum,
/// triangular mel filters, natural log with a floor. Frames are
/// 1 + (N - window) / hop. Throws Error{ClipTooShort} when N < window.
Mat log_mel_spectrogram(const AudioBuffer& clip, const MelSettings& s);

/// Zero-pads rows (time) at the end up to a multiple of `patches`.
Mat pad_to_patches(const Mat& spectrogram, int patches);

/// Splits a padded spectrogram into `patches` equal consecutive time blocks.
std::vector<Mat> tile_patches(const Mat& padded, int patches);
/// Inverse of tile_patches.
Mat untile_patches(const std::vector<Mat>& tiles);

/// Per-bin mean/variance normalization across time.
Mat normalize_bins(const Mat& spectrogram);

}  // namespace mseva::model
