#pragma once

#include <cstdint>
#include <vector>

#include "mseva/model/emotion_model.hpp"

namespace mseva::testkit {

/// Two classes, every width <= 8, short mel front end.
model::ModelConfig tiny_config();

/// `per_class` samples of each configured class. Each modality carries the
/// class on its own: a class-specific face pattern, a tone whose pitch
/// depends on the class, and a class keyword among filler words.
std::vector<model::TrainingExample> synthetic_trimodal(const model::ModelConfig& cfg, int per_class,
                                                       std::uint64_t seed);

struct GradientCheck {
  double max_relative_error = 0.0;  // |a - n| / max(|a| + |n|, 1e-6) over all scalars
  std::size_t scalars = 0;
  std::string worst;  // parameter[index] of the largest error
};

/// Central differences (step 1e-5) of EmotionModel::loss against the tape
/// gradient for every parameter scalar.
GradientCheck check_model_gradient(model::EmotionModel& m, const model::PreparedInputs& in, int label);

}  // namespace mseva::testkit
