#include "mseva/model/emotion_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include <opencv2/imgproc.hpp>

#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"
#include "mseva/media/types.hpp"

namespace mseva::model {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::Visual: return "visual";
    case Modality::Acoustic: return "acoustic";
    case Modality::Textual: return "textual";
  }
  return "unknown";
}

std::string to_string(Sentiment s) { return s == Sentiment::Positive ? "positive" : "negative"; }

// ---------------------------------------------------------------- config

bool ModelConfig::is_positive(int label) const {
  const auto& name = class_names.at(static_cast<std::size_t>(label));
  return std::find(positive_classes.begin(), positive_classes.end(), name) != positive_classes.end();
}

MelSettings ModelConfig::mel() const {
  MelSettings s;
  s.mel_bins = mel_bins;
  s.window_ms = mel_window_ms;
  s.hop_ms = mel_hop_ms;
  return s;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, what);
}

void check_weights(const std::array<double, kModalityCount>& w) {
  double sum = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::WeightSumInvalid, "fusion weight is not a finite non-negative number");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::WeightSumInvalid, "fusion weights sum to " + std::to_string(sum));
  }
}

}  // namespace

void ModelConfig::validate() const {
  require(class_names.size() >= 2, "need at least two classes");
  for (const auto& p : positive_classes) {
    require(std::find(class_names.begin(), class_names.end(), p) != class_names.end(),
            "polarity map names unknown class '" + p + "'");
  }
  for (int d : {visual_feature_dim, acoustic_feature_dim, text_feature_dim}) {
    require(d > 0 && encoder_heads > 0 && d % encoder_heads == 0, "feature dims must be positive multiples of encoder_heads");
  }
  require(encoder_layers >= 0, "encoder_layers must be >= 0");
  require(ffn_multiplier > 0 && head_hidden > 0, "ffn_multiplier and head_hidden must be positive");
  require(conv1_channels > 0 && conv2_channels > 0 && acoustic_frame_hidden > 0, "channel counts must be positive");
  require(mel_bins > 0 && mel_window_ms > 0 && mel_hop_ms > 0 && audio_patches > 0, "mel settings must be positive");
  require(text_embedding_dim > 0 && max_faces_per_segment > 0, "text_embedding_dim and max_faces must be positive");
  require(aux_loss_weight >= 0.0, "aux_loss_weight must be >= 0");
  check_weights(fusion_weights);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"class_names", class_names},
          {"positive_classes", positive_classes},
          {"visual_feature_dim", visual_feature_dim},
          {"acoustic_feature_dim", acoustic_feature_dim},
          {"text_feature_dim", text_feature_dim},
          {"encoder_layers", encoder_layers},
          {"encoder_heads", encoder_heads},
          {"ffn_multiplier", ffn_multiplier},
          {"head_hidden", head_hidden},
          {"conv1_channels", conv1_channels},
          {"conv2_channels", conv2_channels},
          {"acoustic_frame_hidden", acoustic_frame_hidden},
          {"mel_bins", mel_bins},
          {"mel_window_ms", mel_window_ms},
          {"mel_hop_ms", mel_hop_ms},
          {"audio_patches", audio_patches},
          {"text_embedding_dim", text_embedding_dim},
          {"max_faces_per_segment", max_faces_per_segment},
          {"fusion_weights", fusion_weights},
          {"learn_fusion_weights", learn_fusion_weights},
          {"aux_loss_weight", aux_loss_weight},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("class_names", c.class_names);
    get("positive_classes", c.positive_classes);
    get("visual_feature_dim", c.visual_feature_dim);
    get("acoustic_feature_dim", c.acoustic_feature_dim);
    get("text_feature_dim", c.text_feature_dim);
    get("encoder_layers", c.encoder_layers);
    get("encoder_heads", c.encoder_heads);
    get("ffn_multiplier", c.ffn_multiplier);
    get("head_hidden", c.head_hidden);
    get("conv1_channels", c.conv1_channels);
    get("conv2_channels", c.conv2_channels);
    get("acoustic_frame_hidden", c.acoustic_frame_hidden);
    get("mel_bins", c.mel_bins);
    get("mel_window_ms", c.mel_window_ms);
    get("mel_hop_ms", c.mel_hop_ms);
    get("audio_patches", c.audio_patches);
    get("text_embedding_dim", c.text_embedding_dim);
    get("max_faces_per_segment", c.max_faces_per_segment);
    get("fusion_weights", c.fusion_weights);
    get("learn_fusion_weights", c.learn_fusion_weights);
    get("aux_loss_weight", c.aux_loss_weight);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- helpers

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - mx);
  for (auto& x : out) x /= sum;
  return out;
}

int argmax(std::span<const double> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

namespace {

constexpr int kCrop = media::kFaceCropSize;  // 48
constexpr int kConv1 = (kCrop - 3) / 2 + 1;  // 23
constexpr int kConv2 = (kConv1 - 3) / 2 + 1;  // 11

// Seeded normal draws that do not depend on the standard library's
// distribution implementation, so checkpoints match across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

Mat random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd) {
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = sd * rng.normal();
  return m;
}

std::string prefix(Modality m) { return to_string(m); }

int modality_dim(const ModelConfig& c, Modality m) {
  switch (m) {
    case Modality::Visual: return c.visual_feature_dim;
    case Modality::Acoustic: return c.acoustic_feature_dim;
    case Modality::Textual: return c.text_feature_dim;
  }
  return 0;
}

void add_linear(ParameterSet& ps, Rng& rng, const std::string& name, int in, int out) {
  ps.add(name + ".w", random_matrix(rng, in, out, std::sqrt(1.0 / in)));
  ps.add(name + ".b", Mat::Zero(1, out));
}

void add_layer_norm(ParameterSet& ps, const std::string& name, int dim) {
  ps.add(name + ".g", Mat::Ones(1, dim));
  ps.add(name + ".b", Mat::Zero(1, dim));
}

void build_parameters(const ModelConfig& c, ParameterSet& ps) {
  Rng rng(c.seed);
  const int k = c.num_classes();

  add_linear(ps, rng, "visual.conv1", 9, c.conv1_channels);
  add_linear(ps, rng, "visual.conv2", 9 * c.conv1_channels, c.conv2_channels);
  add_linear(ps, rng, "visual.proj", c.conv2_channels, c.visual_feature_dim);
  ps.add("visual.null", random_matrix(rng, 1, c.visual_feature_dim, 0.02));

  add_linear(ps, rng, "acoustic.frame", c.mel_bins, c.acoustic_frame_hidden);
  add_linear(ps, rng, "acoustic.patch", c.acoustic_frame_hidden, c.acoustic_feature_dim);

  add_linear(ps, rng, "textual.proj", c.text_embedding_dim, c.text_feature_dim);
  ps.add("textual.null", random_matrix(rng, 1, c.text_feature_dim, 0.02));

  for (Modality m : {Modality::Visual, Modality::Acoustic, Modality::Textual}) {
    const std::string p = prefix(m);
    const int d = modality_dim(c, m);
    for (int l = 0; l < c.encoder_layers; ++l) {
      const std::string lp = p + ".enc" + std::to_string(l);
      add_layer_norm(ps, lp + ".ln1", d);
      add_linear(ps, rng, lp + ".q", d, d);
      add_linear(ps, rng, lp + ".k", d, d);
      add_linear(ps, rng, lp + ".v", d, d);
      add_linear(ps, rng, lp + ".o", d, d);
      add_layer_norm(ps, lp + ".ln2", d);
      add_linear(ps, rng, lp + ".ff1", d, d * c.ffn_multiplier);
      add_linear(ps, rng, lp + ".ff2", d * c.ffn_multiplier, d);
    }
    add_layer_norm(ps, p + ".lnf", d);
    add_linear(ps, rng, p + ".head1", d, c.head_hidden);
    add_linear(ps, rng, p + ".head2", c.head_hidden, k);
  }

  if (c.learn_fusion_weights) {
    Mat raw(1, kModalityCount);
    for (int i = 0; i < kModalityCount; ++i) raw(0, i) = std::log(std::max(c.fusion_weights[static_cast<std::size_t>(i)], 1e-12));
    ps.add("fusion.raw", raw);
  }
}

Mat positional_encoding(Eigen::Index tokens, int dim) {
  Mat pe(tokens, dim);
  for (Eigen::Index t = 0; t < tokens; ++t) {
    for (int i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / dim);
      pe(t, i) = i % 2 == 0 ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
    }
  }
  return pe;
}

bool any_valid(const std::vector<bool>& mask) { return std::find(mask.begin(), mask.end(), true) != mask.end(); }

/// 1 x T row of pooling weights: uniform over unmasked tokens, or over all
/// tokens when every token is masked.
Mat pooling_row(const std::vector<bool>& mask) {
  const auto n = static_cast<Eigen::Index>(mask.size());
  Mat w = Mat::Zero(1, n);
  if (!any_valid(mask)) {
    w.setConstant(1.0 / static_cast<double>(n));
    return w;
  }
  const auto valid = std::count(mask.begin(), mask.end(), true);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask[static_cast<std::size_t>(i)]) w(0, i) = 1.0 / static_cast<double>(valid);
  }
  return w;
}

std::shared_ptr<const std::vector<std::int64_t>> conv1_index(int faces) {
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  const std::int64_t rows = static_cast<std::int64_t>(faces) * kConv1 * kConv1;
  idx->resize(static_cast<std::size_t>(rows * 9));
  for (int k = 0; k < 9; ++k) {
    const int ky = k / 3;
    const int kx = k % 3;
    for (int t = 0; t < faces; ++t) {
      for (int oy = 0; oy < kConv1; ++oy) {
        for (int ox = 0; ox < kConv1; ++ox) {
          const std::int64_t r = static_cast<std::int64_t>(t) * kConv1 * kConv1 + oy * kConv1 + ox;
          (*idx)[static_cast<std::size_t>(k * rows + r)] =
              static_cast<std::int64_t>(t) * kCrop * kCrop + (2 * oy + ky) * kCrop + (2 * ox + kx);
        }
      }
    }
  }
  return idx;
}

std::shared_ptr<const std::vector<std::int64_t>> conv2_index(int faces, int channels) {
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  const std::int64_t in_rows = static_cast<std::int64_t>(faces) * kConv1 * kConv1;
  const std::int64_t rows = static_cast<std::int64_t>(faces) * kConv2 * kConv2;
  idx->resize(static_cast<std::size_t>(rows * 9 * channels));
  for (int c = 0; c < channels; ++c) {
    for (int k = 0; k < 9; ++k) {
      const int ky = k / 3;
      const int kx = k % 3;
      const std::int64_t col = c * 9 + k;
      for (int t = 0; t < faces; ++t) {
        for (int oy = 0; oy < kConv2; ++oy) {
          for (int ox = 0; ox < kConv2; ++ox) {
            const std::int64_t r = static_cast<std::int64_t>(t) * kConv2 * kConv2 + oy * kConv2 + ox;
            (*idx)[static_cast<std::size_t>(col * rows + r)] =
                c * in_rows + static_cast<std::int64_t>(t) * kConv1 * kConv1 + (2 * oy + ky) * kConv1 + (2 * ox + kx);
          }
        }
      }
    }
  }
  return idx;
}

struct Tokens {
  Graph::Id id;
  std::vector<bool> mask;
};

/// Builds the forward graph. With `trainable` set, parameters are tape
/// leaves that receive gradients; otherwise their values are copied in as
/// constants.
class Forward {
 public:
  Forward(Graph& g, const ModelConfig& cfg, const ParameterSet& params, ParameterSet* trainable)
      : g_(g), cfg_(cfg), params_(params), trainable_(trainable) {}

  Graph::Id p(const std::string& name) {
    if (auto it = cache_.find(name); it != cache_.end()) return it->second;
    const Graph::Id id = trainable_ != nullptr ? g_.param(trainable_->get(name)) : g_.constant(params_.get(name).value);
    cache_.emplace(name, id);
    return id;
  }

  Graph::Id linear(Graph::Id x, const std::string& name) { return g_.add_row(g_.matmul(x, p(name + ".w")), p(name + ".b")); }
  Graph::Id layer_norm(Graph::Id x, const std::string& name) { return g_.layer_norm_rows(x, p(name + ".g"), p(name + ".b")); }

  Tokens visual(const PreparedInputs& in) {
    if (in.face_count == 0) return {p("visual.null"), {false}};
    const int t = in.face_count;
    const Graph::Id x = g_.constant(in.faces);
    const Graph::Id cols1 = g_.gather(x, conv1_index(t), static_cast<Eigen::Index>(t) * kConv1 * kConv1, 9);
    const Graph::Id a1 = g_.gelu(linear(cols1, "visual.conv1"));
    const Graph::Id cols2 = g_.gather(a1, conv2_index(t, cfg_.conv1_channels),
                                      static_cast<Eigen::Index>(t) * kConv2 * kConv2, 9 * cfg_.conv1_channels);
    const Graph::Id a2 = g_.gelu(linear(cols2, "visual.conv2"));
    Mat pool = Mat::Zero(t, static_cast<Eigen::Index>(t) * kConv2 * kConv2);
    for (int i = 0; i < t; ++i) pool.block(i, static_cast<Eigen::Index>(i) * kConv2 * kConv2, 1, kConv2 * kConv2).setConstant(1.0 / (kConv2 * kConv2));
    const Graph::Id pooled = g_.matmul(g_.constant(std::move(pool)), a2);
    return {linear(pooled, "visual.proj"), std::vector<bool>(static_cast<std::size_t>(t), true)};
  }

  Tokens acoustic(const PreparedInputs& in) {
    const int patches = cfg_.audio_patches;
    const auto frames = in.spectrogram.rows();
    const auto width = frames / patches;
    const Graph::Id h = g_.gelu(linear(g_.constant(in.spectrogram), "acoustic.frame"));
    Mat pool = Mat::Zero(patches, frames);
    std::vector<bool> mask(static_cast<std::size_t>(patches));
    for (int i = 0; i < patches; ++i) {
      pool.block(i, i * width, 1, width).setConstant(1.0 / static_cast<double>(width));
      mask[static_cast<std::size_t>(i)] = i * width < in.audio_frames;
    }
    const Graph::Id pooled = g_.matmul(g_.constant(std::move(pool)), h);
    return {g_.gelu(linear(pooled, "acoustic.patch")), std::move(mask)};
  }

  Tokens text(const PreparedInputs& in) {
    if (in.text_embeddings.rows() == 0) return {p("textual.null"), {false}};
    return {linear(g_.constant(in.text_embeddings), "textual.proj"),
            std::vector<bool>(static_cast<std::size_t>(in.text_embeddings.rows()), true)};
  }

  Graph::Id temporal(Modality m, Graph::Id tokens, const std::vector<bool>& mask) {
    const std::string pre = prefix(m);
    const int d = modality_dim(cfg_, m);
    const auto n = static_cast<Eigen::Index>(mask.size());
    if (g_.value(tokens).rows() != n || g_.value(tokens).cols() != d) {
      throw Error(ErrorCode::ShapeMismatch, pre + " tokens do not match the mask/feature width");
    }
    Graph::Id x = g_.add(tokens, g_.constant(positional_encoding(n, d)));
    Mat bias = Mat::Zero(n, n);
    if (any_valid(mask)) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) bias.col(j).setConstant(-1e9);
      }
    }
    const Graph::Id bias_id = g_.constant(std::move(bias));
    const int heads = cfg_.encoder_heads;
    const int dh = d / heads;
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string lp = pre + ".enc" + std::to_string(l);
      const Graph::Id h = layer_norm(x, lp + ".ln1");
      const Graph::Id q = linear(h, lp + ".q");
      const Graph::Id k = linear(h, lp + ".k");
      const Graph::Id v = linear(h, lp + ".v");
      std::vector<Graph::Id> outs;
      for (int hd = 0; hd < heads; ++hd) {
        const Graph::Id qh = g_.slice_cols(q, hd * dh, dh);
        const Graph::Id kh = g_.slice_cols(k, hd * dh, dh);
        const Graph::Id vh = g_.slice_cols(v, hd * dh, dh);
        const Graph::Id scores = g_.add(g_.scale(g_.matmul(qh, g_.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh))), bias_id);
        outs.push_back(g_.matmul(g_.softmax_rows(scores), vh));
      }
      x = g_.add(x, linear(g_.concat_cols(outs), lp + ".o"));
      const Graph::Id h2 = layer_norm(x, lp + ".ln2");
      x = g_.add(x, linear(g_.gelu(linear(h2, lp + ".ff1")), lp + ".ff2"));
    }
    return layer_norm(x, pre + ".lnf");
  }

  Graph::Id head(Modality m, Graph::Id sequence, const std::vector<bool>& mask) {
    const std::string pre = prefix(m);
    const Graph::Id pooled = g_.matmul(g_.constant(pooling_row(mask)), sequence);
    return linear(g_.gelu(linear(pooled, pre + ".head1")), pre + ".head2");
  }

  Graph::Id fusion_row() {
    if (cfg_.learn_fusion_weights) return g_.softmax_rows(p("fusion.raw"));
    Mat w(1, kModalityCount);
    for (int i = 0; i < kModalityCount; ++i) w(0, i) = cfg_.fusion_weights[static_cast<std::size_t>(i)];
    return g_.constant(std::move(w));
  }

  struct Outputs {
    std::array<Graph::Id, kModalityCount> logits{};
    Graph::Id fused = -1;
  };

  Outputs all(const PreparedInputs& in) {
    Outputs out;
    const std::array<Tokens, kModalityCount> toks = {visual(in), acoustic(in), text(in)};
    for (int i = 0; i < kModalityCount; ++i) {
      const auto m = static_cast<Modality>(i);
      const auto& t = toks[static_cast<std::size_t>(i)];
      out.logits[static_cast<std::size_t>(i)] = head(m, temporal(m, t.id, t.mask), t.mask);
    }
    out.fused = g_.matmul(fusion_row(), g_.concat_rows({out.logits[0], out.logits[1], out.logits[2]}));
    return out;
  }

 private:
  Graph& g_;
  const ModelConfig& cfg_;
  const ParameterSet& params_;
  ParameterSet* trainable_;
  std::map<std::string, Graph::Id> cache_;
};

std::vector<double> row_values(const Mat& m) { return {m.data(), m.data() + m.size()}; }

ModalityPrediction make_modality_prediction(Modality m, std::vector<double> logits) {
  ModalityPrediction p;
  p.modality = m;
  p.probabilities = softmax(logits);
  p.logits = std::move(logits);
  return p;
}

void finish(FusedPrediction& p, const ModelConfig& cfg) {
  p.probabilities = softmax(p.logits);
  p.emotion_label = argmax(p.logits);
  p.emotion_name = cfg.class_names.at(static_cast<std::size_t>(p.emotion_label));
  p.sentiment = cfg.is_positive(p.emotion_label) ? Sentiment::Positive : Sentiment::Negative;
  p.positive_probability = 0.0;
  for (int k = 0; k < cfg.num_classes(); ++k) {
    if (cfg.is_positive(k)) p.positive_probability += p.probabilities[static_cast<std::size_t>(k)];
  }
}

Mat faces_to_column(std::span<const cv::Mat> crops, int limit) {
  const int n = std::min<int>(static_cast<int>(crops.size()), limit);
  Mat col(static_cast<Eigen::Index>(n) * kCrop * kCrop, 1);
  for (int t = 0; t < n; ++t) {
    cv::Mat gray = crops[static_cast<std::size_t>(t)];
    if (gray.empty()) throw Error(ErrorCode::ShapeMismatch, "empty face crop");
    if (gray.channels() == 3) cv::cvtColor(gray, gray, cv::COLOR_RGB2GRAY);
    if (gray.rows != kCrop || gray.cols != kCrop) cv::resize(gray, gray, cv::Size(kCrop, kCrop), 0, 0, cv::INTER_AREA);
    if (gray.type() != CV_8UC1) throw Error(ErrorCode::ShapeMismatch, "face crops must be 8-bit");
    for (int y = 0; y < kCrop; ++y) {
      const auto* row = gray.ptr<unsigned char>(y);
      for (int x = 0; x < kCrop; ++x) {
        col(static_cast<Eigen::Index>(t) * kCrop * kCrop + y * kCrop + x, 0) = row[x] / 255.0 - 0.5;
      }
    }
  }
  return col;
}

}  // namespace

// ---------------------------------------------------------------- fusion

FusedPrediction fuse(const std::array<ModalityPrediction, kModalityCount>& preds,
                     const std::array<double, kModalityCount>& weights, const ModelConfig& cfg) {
  check_weights(weights);
  const auto k = static_cast<std::size_t>(cfg.num_classes());
  for (const auto& p : preds) {
    if (p.logits.size() != k) throw Error(ErrorCode::ShapeMismatch, "modality logits do not match class count");
  }
  FusedPrediction out;
  out.logits.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    out.logits[c] = weights[0] * preds[0].logits[c] + weights[1] * preds[1].logits[c] + weights[2] * preds[2].logits[c];
  }
  out.per_modality = preds;
  out.weights = weights;
  finish(out, cfg);
  return out;
}

FusedPrediction aggregate_video(std::span<const FusedPrediction> preds, std::span<const std::int64_t> durations_ms,
                                const ModelConfig& cfg) {
  if (preds.empty()) throw Error(ErrorCode::EmptyTrack, "no segment predictions to aggregate");
  if (preds.size() != durations_ms.size()) throw Error(ErrorCode::ShapeMismatch, "one duration per prediction required");
  double total = 0.0;
  for (auto d : durations_ms) {
    if (d <= 0) throw Error(ErrorCode::InvariantViolation, "segment duration must be positive");
    total += static_cast<double>(d);
  }
  const auto k = static_cast<std::size_t>(cfg.num_classes());
  FusedPrediction out;
  out.logits.assign(k, 0.0);
  out.weights = preds.front().weights;
  std::array<std::vector<double>, kModalityCount> per;
  for (auto& v : per) v.assign(k, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double w = static_cast<double>(durations_ms[i]) / total;
    for (std::size_t c = 0; c < k; ++c) {
      out.logits[c] += w * preds[i].logits.at(c);
      for (std::size_t m = 0; m < per.size(); ++m) per[m][c] += w * preds[i].per_modality[m].logits.at(c);
    }
  }
  for (std::size_t m = 0; m < per.size(); ++m) {
    out.per_modality[m] = make_modality_prediction(static_cast<Modality>(m), std::move(per[m]));
  }
  finish(out, cfg);
  return out;
}

// ---------------------------------------------------------------- model

EmotionModel::EmotionModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_parameters(cfg_, params_);
}

std::array<double, kModalityCount> EmotionModel::fusion_weights() const {
  if (!cfg_.learn_fusion_weights) return cfg_.fusion_weights;
  const Mat& raw = params_.get("fusion.raw").value;
  const auto w = softmax(std::vector<double>(raw.data(), raw.data() + raw.size()));
  return {w[0], w[1], w[2]};
}

PreparedInputs EmotionModel::prepare(const SegmentInputs& inputs, const TextBackend& text) const {
  PreparedInputs out;
  out.faces = faces_to_column(inputs.faces, cfg_.max_faces_per_segment);
  out.face_count = static_cast<int>(out.faces.rows() / (kCrop * kCrop));
  const Mat mel = normalize_bins(log_mel_spectrogram(inputs.audio, cfg_.mel()));
  out.audio_frames = static_cast<int>(mel.rows());
  out.spectrogram = pad_to_patches(mel, cfg_.audio_patches);
  out.text_embeddings = text.embed(inputs.text);
  if (out.text_embeddings.rows() > 0 && out.text_embeddings.cols() != cfg_.text_embedding_dim) {
    throw Error(ErrorCode::ShapeMismatch, "text backend width " + std::to_string(out.text_embeddings.cols()) +
                                              " != text_embedding_dim " + std::to_string(cfg_.text_embedding_dim));
  }
  return out;
}

ModalityFeatures EmotionModel::encode_visual(std::span<const cv::Mat> crops) const {
  PreparedInputs in;
  in.faces = faces_to_column(crops, cfg_.max_faces_per_segment);
  in.face_count = static_cast<int>(in.faces.rows() / (kCrop * kCrop));
  Graph g;
  Forward f(g, cfg_, params_, nullptr);
  const Tokens t = f.visual(in);
  return {Modality::Visual, g.value(f.temporal(Modality::Visual, t.id, t.mask)), t.mask};
}

ModalityFeatures EmotionModel::encode_acoustic(const AudioBuffer& clip) const {
  PreparedInputs in;
  const Mat mel = normalize_bins(log_mel_spectrogram(clip, cfg_.mel()));
  in.audio_frames = static_cast<int>(mel.rows());
  in.spectrogram = pad_to_patches(mel, cfg_.audio_patches);
  Graph g;
  Forward f(g, cfg_, params_, nullptr);
  const Tokens t = f.acoustic(in);
  return {Modality::Acoustic, g.value(f.temporal(Modality::Acoustic, t.id, t.mask)), t.mask};
}

ModalityFeatures EmotionModel::encode_text(const std::string& text, const TextBackend& backend) const {
  PreparedInputs in;
  in.text_embeddings = backend.embed(text);
  if (in.text_embeddings.rows() > 0 && in.text_embeddings.cols() != cfg_.text_embedding_dim) {
    throw Error(ErrorCode::ShapeMismatch, "text backend width does not match text_embedding_dim");
  }
  Graph g;
  Forward f(g, cfg_, params_, nullptr);
  const Tokens t = f.text(in);
  return {Modality::Textual, g.value(f.temporal(Modality::Textual, t.id, t.mask)), t.mask};
}

ModalityFeatures EmotionModel::encode_sequence(Modality m, const Mat& tokens, const std::vector<bool>& mask) const {
  Graph g;
  Forward f(g, cfg_, params_, nullptr);
  return {m, g.value(f.temporal(m, g.constant(tokens), mask)), mask};
}

RowVec EmotionModel::pool(const ModalityFeatures& features) {
  if (features.sequence.rows() != static_cast<Eigen::Index>(features.mask.size())) {
    throw Error(ErrorCode::ShapeMismatch, "mask length does not match token count");
  }
  return pooling_row(features.mask) * features.sequence;
}

ModalityPrediction EmotionModel::predict_modality(const ModalityFeatures& features) const {
  if (features.sequence.rows() != static_cast<Eigen::Index>(features.mask.size()) || features.mask.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "mask length does not match token count");
  }
  if (features.sequence.cols() != modality_dim(cfg_, features.modality)) {
    throw Error(ErrorCode::ShapeMismatch, to_string(features.modality) + " feature width mismatch");
  }
  Graph g;
  Forward f(g, cfg_, params_, nullptr);
  const Graph::Id logits = f.head(features.modality, g.constant(features.sequence), features.mask);
  return make_modality_prediction(features.modality, row_values(g.value(logits)));
}

FusedPrediction EmotionModel::infer(const PreparedInputs& inputs) const {
  Graph g;
  Forward f(g, cfg_, params_, nullptr);
  const auto out = f.all(inputs);
  std::array<ModalityPrediction, kModalityCount> preds;
  for (int i = 0; i < kModalityCount; ++i) {
    preds[static_cast<std::size_t>(i)] =
        make_modality_prediction(static_cast<Modality>(i), row_values(g.value(out.logits[static_cast<std::size_t>(i)])));
  }
  return fuse(preds, fusion_weights(), cfg_);
}

FusedPrediction EmotionModel::infer_segment(const SegmentInputs& inputs, const TextBackend& text) const {
  return infer(prepare(inputs, text));
}

double EmotionModel::loss(const PreparedInputs& inputs, int label, bool accumulate, FusedPrediction* prediction) {
  if (label < 0 || label >= cfg_.num_classes()) {
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " outside [0, " +
                                                std::to_string(cfg_.num_classes()) + ")");
  }
  Graph g;
  Forward f(g, cfg_, params_, accumulate ? &params_ : nullptr);
  const auto out = f.all(inputs);
  Graph::Id total = g.cross_entropy(out.fused, label);
  if (cfg_.aux_loss_weight > 0.0) {
    for (auto id : out.logits) total = g.add(total, g.scale(g.cross_entropy(id, label), cfg_.aux_loss_weight));
  }
  if (prediction != nullptr) {
    std::array<ModalityPrediction, kModalityCount> preds;
    for (int i = 0; i < kModalityCount; ++i) {
      preds[static_cast<std::size_t>(i)] =
          make_modality_prediction(static_cast<Modality>(i), row_values(g.value(out.logits[static_cast<std::size_t>(i)])));
    }
    *prediction = fuse(preds, fusion_weights(), cfg_);
  }
  if (accumulate) g.backward(total);
  return g.scalar(total);
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'M', 'S', 'E', 'V', 'A', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (pos_ + n > data_.size()) throw Error(ErrorCode::IoFailure, "truncated checkpoint");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

void EmotionModel::save(const std::filesystem::path& path) const {
  std::string out(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  const std::string cfg = cfg_.to_json().dump();
  put<std::uint64_t>(out, cfg.size());
  out += cfg;
  const auto params = params_.all();
  put<std::uint64_t>(out, params.size());
  for (const Parameter* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    out.append(reinterpret_cast<const char*>(p->value.data()), sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  write_file_atomic(path, out);
}

EmotionModel EmotionModel::load(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Reader r(data);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::IoFailure, path.string() + " is not a checkpoint");
  }
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw Error(ErrorCode::IoFailure, "unsupported checkpoint version " + std::to_string(v));
  }
  const auto cfg_len = r.get<std::uint64_t>();
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(nlohmann::json::parse(std::string(r.take(cfg_len), cfg_len)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoFailure, std::string("checkpoint config: ") + e.what());
  }
  EmotionModel model(cfg);
  const auto count = r.get<std::uint64_t>();
  auto params = model.params_.all();
  if (count != params.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoint parameter count mismatch");
  for (Parameter* p : params) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name(r.take(name_len), name_len);
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (name != p->name || rows != static_cast<std::uint64_t>(p->value.rows()) ||
        cols != static_cast<std::uint64_t>(p->value.cols())) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint parameter '" + name + "' does not match the model");
    }
    std::memcpy(p->value.data(), r.take(sizeof(double) * rows * cols), sizeof(double) * rows * cols);
  }
  if (!r.done()) throw Error(ErrorCode::IoFailure, "trailing bytes in checkpoint");
  return model;
}

FusedPrediction infer_segment(const std::shared_ptr<const EmotionModel>& model, const SegmentInputs& inputs,
                              const TextBackend& text) {
  if (!model) throw Error(ErrorCode::ModelNotLoaded, "no model loaded");
  return model->infer_segment(inputs, text);
}

// ---------------------------------------------------------------- training

TrainReport train(EmotionModel& model, std::span<const TrainingExample> data, const TextBackend& text,
                  const TrainSchedule& schedule) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no training examples");
  if (schedule.epochs <= 0 || schedule.batch <= 0 || schedule.grad_accum <= 0 || !(schedule.learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "epochs, batch, grad_accum and learning_rate must be positive");
  }
  const int k = model.config().num_classes();
  for (const auto& ex : data) {
    if (ex.label < 0 || ex.label >= k) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(ex.label) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  std::vector<PreparedInputs> prepared;
  prepared.reserve(data.size());
  for (const auto& ex : data) prepared.push_back(model.prepare(ex.inputs, text));

  auto params = model.parameters().all();
  std::vector<Mat> m1;
  std::vector<Mat> m2;
  for (const Parameter* p : params) {
    m1.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    m2.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  const auto n = data.size();
  const auto batch = static_cast<std::size_t>(schedule.batch);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(schedule.epochs);

  TrainReport report;
  Rng shuffler(model.config().seed ^ 0x5eed5eed5eed5eedULL);
  std::vector<std::size_t> order(n);
  model.parameters().zero_grad();
  int accumulated_steps = 0;
  int accumulated_samples = 0;

  auto apply_update = [&] {
    ++report.updates;
    const double t = report.updates;
    const double scale = 1.0 / accumulated_samples;
    const double lr = schedule.learning_rate * std::sqrt(1.0 - std::pow(kBeta2, t)) / (1.0 - std::pow(kBeta1, t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Mat g = params[i]->grad * scale;
      m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g;
      m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g.cwiseProduct(g);
      params[i]->value.array() -= lr * m1[i].array() / (m2[i].array().sqrt() + kEps);
    }
    model.parameters().zero_grad();
    accumulated_steps = 0;
    accumulated_samples = 0;
  };

  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (schedule.shuffle) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffler.next() % i]);
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      double step_loss = 0.0;
      const std::size_t end = std::min(n, (s + 1) * batch);
      for (std::size_t j = s * batch; j < end; ++j) {
        const std::size_t idx = order[j];
        FusedPrediction pred;
        const double l = model.loss(prepared[idx], data[idx].label, true, &pred);
        step_loss += l;
        loss_sum += l;
        if (pred.emotion_label == data[idx].label) ++correct;
        ++accumulated_samples;
      }
      report.step_losses.push_back(step_loss / static_cast<double>(end - s * batch));
      ++report.steps;
      ++accumulated_steps;
      if (accumulated_steps == schedule.grad_accum || static_cast<std::size_t>(report.steps) == total_steps) apply_update();
    }
    report.epochs.push_back({loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
  }
  return report;
}

double accuracy(const EmotionModel& model, std::span<const TrainingExample> data, const TextBackend& text) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no examples");
  std::size_t correct = 0;
  for (const auto& ex : data) {
    if (model.infer_segment(ex.inputs, text).emotion_label == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------- json

nlohmann::json to_json(const ModalityPrediction& p, const ModelConfig& cfg) {
  nlohmann::json probs = nlohmann::json::object();
  for (std::size_t c = 0; c < p.probabilities.size(); ++c) probs[cfg.class_names.at(c)] = p.probabilities[c];
  const int label = argmax(p.logits);
  return {{"modality", to_string(p.modality)},
          {"logits", p.logits},
          {"probabilities", probs},
          {"emotion", cfg.class_names.at(static_cast<std::size_t>(label))}};
}

nlohmann::json to_json(const FusedPrediction& p, const ModelConfig& cfg) {
  nlohmann::json probs = nlohmann::json::object();
  for (std::size_t c = 0; c < p.probabilities.size(); ++c) probs[cfg.class_names.at(c)] = p.probabilities[c];
  nlohmann::json modalities = nlohmann::json::object();
  nlohmann::json weights = nlohmann::json::object();
  for (std::size_t m = 0; m < p.per_modality.size(); ++m) {
    modalities[to_string(static_cast<Modality>(m))] = to_json(p.per_modality[m], cfg);
    weights[to_string(static_cast<Modality>(m))] = p.weights[m];
  }
  return {{"emotion", p.emotion_name},
          {"emotion_label", p.emotion_label},
          {"sentiment", to_string(p.sentiment)},
          {"positive_probability", p.positive_probability},
          {"logits", p.logits},
          {"probabilities", probs},
          {"fusion_weights", weights},
          {"modalities", modalities}};
}

}  // namespace mseva::model
