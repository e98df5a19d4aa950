#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "json.hpp"
#include "mseva/common/wav.hpp"
#include "mseva/model/features.hpp"
#include "mseva/model/graph.hpp"
#include "mseva/model/text_backend.hpp"

namespace mseva::model {

enum class Modality { Visual = 0, Acoustic = 1, Textual = 2 };
inline constexpr int kModalityCount = 3;
std::string to_string(Modality m);

enum class Sentiment { Positive, Negative };
std::string to_string(Sentiment s);

struct ModelConfig {
  std::vector<std::string> class_names = {"happy", "sad", "angry", "neutral"};
  std::vector<std::string> positive_classes = {"happy", "neutral"};  // polarity map

  int visual_feature_dim = 32;
  int acoustic_feature_dim = 32;
  int text_feature_dim = 32;
  int encoder_layers = 1;
  int encoder_heads = 4;
  int ffn_multiplier = 2;
  int head_hidden = 32;

  int conv1_channels = 8;
  int conv2_channels = 16;
  int acoustic_frame_hidden = 32;

  int mel_bins = 64;
  int mel_window_ms = 25;
  int mel_hop_ms = 10;
  int audio_patches = 16;

  int text_embedding_dim = 32;  // width of the text backend output
  int max_faces_per_segment = 10;

  std::array<double, 3> fusion_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};  // visual, acoustic, textual
  bool learn_fusion_weights = true;
  double aux_loss_weight = 1.0;
  std::uint64_t seed = 7;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  bool is_positive(int label) const;
  MelSettings mel() const;

  /// Throws Error{InvalidConfig} (or Error{WeightSumInvalid} for the weights).
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ModalityFeatures {
  Modality modality = Modality::Visual;
  Mat sequence;            // tokens x feature_dim
  std::vector<bool> mask;  // false for null / padding tokens
};

struct ModalityPrediction {
  Modality modality = Modality::Visual;
  std::vector<double> logits;
  std::vector<double> probabilities;
};

struct FusedPrediction {
  std::vector<double> logits;
  std::vector<double> probabilities;
  int emotion_label = 0;
  std::string emotion_name;
  Sentiment sentiment = Sentiment::Positive;
  double positive_probability = 0.0;  // mass on classes the polarity map calls positive
  std::array<ModalityPrediction, kModalityCount> per_modality;
  std::array<double, kModalityCount> weights{};
};

/// Raw inputs of one utterance: 48x48 face crops (CV_8UC1), mono audio, text.
struct SegmentInputs {
  std::vector<cv::Mat> faces;
  AudioBuffer audio;
  std::string text;
};

struct TrainingExample {
  SegmentInputs inputs;
  int label = 0;
};

struct TrainSchedule {
  int epochs = 30;
  int batch = 1;
  int grad_accum = 4;
  double learning_rate = 1e-3;
  bool shuffle = true;
};

struct EpochMetrics {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

struct TrainReport {
  std::vector<double> step_losses;  // loss of each step before its update
  std::vector<EpochMetrics> epochs;
  int steps = 0;
  int updates = 0;
};

/// Preprocessed, model-ready form of SegmentInputs.
struct PreparedInputs {
  Mat faces;  // (n_faces * 48 * 48) x 1, pixels scaled to [-0.5, 0.5]
  int face_count = 0;
  Mat spectrogram;  // padded, bin-normalized log-mel (frames x mel_bins)
  int audio_frames = 0;  // rows of `spectrogram` before padding
  Mat text_embeddings;
};

std::vector<double> softmax(std::span<const double> logits);
/// Index of the maximum; ties go to the lowest index.
int argmax(std::span<const double> values);

/// w_v * logits_v + w_a * logits_a + w_t * logits_t. Throws
/// Error{WeightSumInvalid} unless the weights are finite and sum to 1.
FusedPrediction fuse(const std::array<ModalityPrediction, kModalityCount>& preds,
                     const std::array<double, kModalityCount>& weights, const ModelConfig& cfg);

/// Duration-weighted mean of segment logits (fused and per modality).
/// Throws Error{EmptyTrack}.
FusedPrediction aggregate_video(std::span<const FusedPrediction> preds, std::span<const std::int64_t> durations_ms,
                                const ModelConfig& cfg);

/// Trimodal classifier: per-modality encoders feeding temporal self-attention,
/// per-modality feed-forward heads and a linear fusion of their logits.
class EmotionModel {
 public:
  explicit EmotionModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  /// Effective fusion weights (softmax of the learned logits, or the fixed
  /// configured weights).
  std::array<double, kModalityCount> fusion_weights() const;

  PreparedInputs prepare(const SegmentInputs& inputs, const TextBackend& text) const;

  ModalityFeatures encode_visual(std::span<const cv::Mat> crops) const;
  ModalityFeatures encode_acoustic(const AudioBuffer& clip) const;
  ModalityFeatures encode_text(const std::string& text, const TextBackend& backend) const;
  /// Temporal self-attention over an arbitrary token sequence of one modality
  /// (positional encoding added first). Masked tokens are ignored as keys.
  ModalityFeatures encode_sequence(Modality m, const Mat& tokens, const std::vector<bool>& mask) const;

  ModalityPrediction predict_modality(const ModalityFeatures& features) const;
  /// Mean over unmasked tokens, or over all tokens when none is unmasked.
  static RowVec pool(const ModalityFeatures& features);

  FusedPrediction infer(const PreparedInputs& inputs) const;
  FusedPrediction infer_segment(const SegmentInputs& inputs, const TextBackend& text) const;

  /// Total loss (fused CE + aux * per-modality CE) of one example; when
  /// `accumulate` is set the gradients are added into the parameter grads.
  double loss(const PreparedInputs& inputs, int label, bool accumulate, FusedPrediction* prediction = nullptr);

  void save(const std::filesystem::path& path) const;
  static EmotionModel load(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
  ParameterSet params_;
};

/// Throws Error{ModelNotLoaded} for a null handle.
FusedPrediction infer_segment(const std::shared_ptr<const EmotionModel>& model, const SegmentInputs& inputs,
                              const TextBackend& text);

/// Adam over cross-entropy with batch/gradient-accumulation scheduling.
/// Throws Error{EmptyDataset} or Error{LabelOutOfRange}.
TrainReport train(EmotionModel& model, std::span<const TrainingExample> data, const TextBackend& text,
                  const TrainSchedule& schedule);

double accuracy(const EmotionModel& model, std::span<const TrainingExample> data, const TextBackend& text);

nlohmann::json to_json(const ModalityPrediction& p, const ModelConfig& cfg);
nlohmann::json to_json(const FusedPrediction& p, const ModelConfig& cfg);

}  // namespace mseva::model
