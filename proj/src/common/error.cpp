#include "mseva/common/error.hpp"

namespace mseva {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnreadableMedia: return "UnreadableMedia";
    case ErrorCode::NoAudioStream: return "NoAudioStream";
    case ErrorCode::NoVideoStream: return "NoVideoStream";
    case ErrorCode::AmbiguousRules: return "AmbiguousRules";
    case ErrorCode::FrameDecodeFailure: return "FrameDecodeFailure";
    case ErrorCode::DetectorUnavailable: return "DetectorUnavailable";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::SegmentOutOfRange: return "SegmentOutOfRange";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ClipTooShort: return "ClipTooShort";
    case ErrorCode::WeightSumInvalid: return "WeightSumInvalid";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::ModelNotLoaded: return "ModelNotLoaded";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::IncompleteRatings: return "IncompleteRatings";
    case ErrorCode::DegenerateExpectation: return "DegenerateExpectation";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::MissingTextVariant: return "MissingTextVariant";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::TooLong: return "TooLong";
    case ErrorCode::UnknownJob: return "UnknownJob";
    case ErrorCode::NotReady: return "NotReady";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace mseva
