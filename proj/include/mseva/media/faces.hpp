#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/objdetect.hpp>

#include "mseva/media/types.hpp"

namespace mseva::media {

class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  /// Candidate face boxes for one RGB frame; may be empty.
  virtual std::vector<cv::Rect> detect(const cv::Mat& rgb) const = 0;
};

/// Viola-Jones cascade. Throws Error{DetectorUnavailable} when the cascade
/// file cannot be loaded.
class HaarFaceDetector final : public FaceDetector {
 public:
  explicit HaarFaceDetector(const std::filesystem::path& cascade_path, int min_face_px = 20);
  std::vector<cv::Rect> detect(const cv::Mat& rgb) const override;

 private:
  // CascadeClassifier::detectMultiScale is not const-safe across threads.
  mutable cv::CascadeClassifier cascade_;
  int min_face_px_;
};

/// Deterministic stand-in: the centred square of side min(w, h).
class CenterCropDetector final : public FaceDetector {
 public:
  std::vector<cv::Rect> detect(const cv::Mat& rgb) const override;
};

/// Cascade shipped with the project (data/haarcascade_frontalface_default.xml),
/// or the path in MSEVA_FACE_CASCADE.
std::filesystem::path default_cascade_path();

/// Haar detector, or the centre-crop stub when the cascade cannot be loaded
/// and `fallback_to_stub` is set.
std::unique_ptr<FaceDetector> make_face_detector(const std::filesystem::path& cascade_path,
                                                 bool fallback_to_stub);

/// At most one crop per frame (largest box), resampled to 48x48 grayscale.
std::vector<FaceCrop> detect_faces(const FrameBatch& batch, const FaceDetector& detector);

cv::Mat to_face_crop(const cv::Mat& rgb, const cv::Rect& bbox);

}  // namespace mseva::media
