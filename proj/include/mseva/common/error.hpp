#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mseva {

enum class ErrorCode {
  // media-prep
  UnreadableMedia,
  NoAudioStream,
  NoVideoStream,
  AmbiguousRules,
  FrameDecodeFailure,
  DetectorUnavailable,
  // segmenter
  EmptyAudio,
  SegmentOutOfRange,
  // transcriber
  BackendFailure,
  IoFailure,
  MalformedLine,
  InvariantViolation,
  // emotion-model
  ShapeMismatch,
  ClipTooShort,
  WeightSumInvalid,
  EmptyDataset,
  LabelOutOfRange,
  ModelNotLoaded,
  EmptyTrack,
  // annotation-kit
  IncompleteRatings,
  DegenerateExpectation,
  // eval-harness
  EmptyMatrix,
  SingleClass,
  ZeroBaseline,
  MissingTextVariant,
  // service
  TooLarge,
  TooLong,
  UnknownJob,
  NotReady,
  // shared
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// that callers (CLI, HTTP layer) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace mseva
