#include "mseva/media/faces.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>

#include <opencv2/imgproc.hpp>

#include "mseva/common/error.hpp"

#ifndef MSEVA_DATA_DIR_DEFAULT
#define MSEVA_DATA_DIR_DEFAULT "data"
#endif

namespace mseva::media {
namespace {
std::mutex cascade_mutex;
}

HaarFaceDetector::HaarFaceDetector(const std::filesystem::path& cascade_path, int min_face_px)
    : min_face_px_(min_face_px) {
  if (!std::filesystem::exists(cascade_path) || !cascade_.load(cascade_path.string())) {
    throw Error(ErrorCode::DetectorUnavailable, "cannot load face cascade " + cascade_path.string());
  }
}

std::vector<cv::Rect> HaarFaceDetector::detect(const cv::Mat& rgb) const {
  cv::Mat gray;
  cv::cvtColor(rgb, gray, cv::COLOR_RGB2GRAY);
  cv::equalizeHist(gray, gray);
  std::vector<cv::Rect> found;
  std::lock_guard lock(cascade_mutex);
  cascade_.detectMultiScale(gray, found, 1.1, 5, 0, cv::Size(min_face_px_, min_face_px_));
  // canonical order so crops do not depend on how candidates were grouped
  std::sort(found.begin(), found.end(), [](const cv::Rect& a, const cv::Rect& b) {
    return std::tie(a.y, a.x, a.height, a.width) < std::tie(b.y, b.x, b.height, b.width);
  });
  return found;
}

std::vector<cv::Rect> CenterCropDetector::detect(const cv::Mat& rgb) const {
  const int side = std::min(rgb.cols, rgb.rows);
  if (side <= 0) return {};
  return {cv::Rect((rgb.cols - side) / 2, (rgb.rows - side) / 2, side, side)};
}

std::filesystem::path default_cascade_path() {
  if (const char* env = std::getenv("MSEVA_FACE_CASCADE"); env != nullptr && *env != '\0') return env;
  return std::filesystem::path(MSEVA_DATA_DIR_DEFAULT) / "haarcascade_frontalface_default.xml";
}

std::unique_ptr<FaceDetector> make_face_detector(const std::filesystem::path& cascade_path,
                                                 bool fallback_to_stub) {
  try {
    return std::make_unique<HaarFaceDetector>(cascade_path);
  } catch (const Error&) {
    if (!fallback_to_stub) throw;
    return std::make_unique<CenterCropDetector>();
  }
}

cv::Mat to_face_crop(const cv::Mat& rgb, const cv::Rect& bbox) {
  cv::Mat gray;
  cv::cvtColor(rgb(bbox), gray, cv::COLOR_RGB2GRAY);
  cv::Mat crop;
  const int interp = (bbox.width >= kFaceCropSize) ? cv::INTER_AREA : cv::INTER_LINEAR;
  cv::resize(gray, crop, {kFaceCropSize, kFaceCropSize}, 0, 0, interp);
  return crop;
}

std::vector<FaceCrop> detect_faces(const FrameBatch& batch, const FaceDetector& detector) {
  std::vector<FaceCrop> crops;
  const auto n = std::min(batch.frames.size(), batch.timestamps_ms.size());
  for (std::size_t i = 0; i < n; ++i) {
    const cv::Mat& frame = batch.frames[i];
    const cv::Rect bounds(0, 0, frame.cols, frame.rows);
    std::vector<cv::Rect> boxes = detector.detect(frame);
    std::optional<cv::Rect> best;
    for (const auto& box : boxes) {
      const cv::Rect clipped = box & bounds;
      if (clipped.area() <= 0) continue;
      if (!best || clipped.area() > best->area()) best = clipped;
    }
    if (!best) continue;
    crops.push_back({batch.timestamps_ms[i], *best, to_face_crop(frame, *best)});
  }
  return crops;
}

}  // namespace mseva::media
