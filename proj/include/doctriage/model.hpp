#ifndef DOCTRIAGE_MODEL_HPP
#define DOCTRIAGE_MODEL_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doctriage/encoder.hpp"
#include "doctriage/error.hpp"
#include "doctriage/labels.hpp"
#include "doctriage/rng.hpp"

namespace doctriage {

enum class Mode { full, image_only, text_only };

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::full: return "full";
    case Mode::image_only: return "image_only";
    case Mode::text_only: return "text_only";
  }
  throw DataError("invalid mode value");
}

inline Mode mode_from_name(const std::string& name) {
  if (name == "full") return Mode::full;
  if (name == "image_only" || name == "image") return Mode::image_only;
  if (name == "text_only" || name == "text") return Mode::text_only;
  throw UsageError("unknown mode: " + name);
}

struct ModelDims {
  EncoderDims encoder;
  int image_dim = 4096;
  int fusion_dim = 256;
  int classes = static_cast<int>(ClassLabel::count());
};

// All trainable parameters. The absent branch's weights do not exist in the
// ablation modes (the fusion input is narrower, not zero-padded).
struct ModelParams {
  Mode mode = Mode::full;
  ModelDims dims;
  std::optional<EncoderParams> encoder;
  Mat fusion_w;  // d_f x input_dim
  Mat fusion_b;  // d_f x 1
  Mat output_w;  // classes x d_f
  Mat output_b;  // classes x 1

  bool uses_image() const { return mode != Mode::text_only; }
  bool uses_text() const { return mode != Mode::image_only; }

  int input_dim() const {
    int dim = 0;
    if (uses_image()) dim += dims.image_dim;
    if (uses_text()) dim += 2 * dims.encoder.hidden;
    return dim;
  }
};

namespace detail {

inline void glorot_uniform(Mat& m, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

}  // namespace detail

inline ModelParams init_model_params(const ModelDims& dims, Mode mode, Rng& rng) {
  ModelParams params;
  params.mode = mode;
  params.dims = dims;
  if (params.uses_text()) {
    Rng enc_rng = rng.stream(1);
    params.encoder = init_encoder_params(dims.encoder, enc_rng);
  }
  params.fusion_w.resize(dims.fusion_dim, params.input_dim());
  detail::glorot_uniform(params.fusion_w, rng);
  params.fusion_b = Mat::Zero(dims.fusion_dim, 1);
  params.output_w.resize(dims.classes, dims.fusion_dim);
  detail::glorot_uniform(params.output_w, rng);
  params.output_b = Mat::Zero(dims.classes, 1);
  return params;
}

// Visits every trainable tensor in a fixed declared order; the same order is
// used for Adam moments and checkpoint serialization.
template <class Params, class Fn>
void visit_tensors(Params& params, Fn&& fn) {
  if (params.encoder) {
    auto& enc = *params.encoder;
    fn("encoder.fwd.w_in", enc.fwd.w_in);
    fn("encoder.fwd.w_rec", enc.fwd.w_rec);
    fn("encoder.fwd.bias", enc.fwd.bias);
    fn("encoder.bwd.w_in", enc.bwd.w_in);
    fn("encoder.bwd.w_rec", enc.bwd.w_rec);
    fn("encoder.bwd.bias", enc.bwd.bias);
    fn("encoder.attn.proj", enc.attn.proj);
    fn("encoder.attn.score", enc.attn.score);
  }
  fn("fusion.w", params.fusion_w);
  fn("fusion.b", params.fusion_b);
  fn("output.w", params.output_w);
  fn("output.b", params.output_b);
}

inline ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  visit_tensors(z, [](const char*, Mat& t) { t.setZero(); });
  return z;
}

// Numerically stable softmax (max subtraction).
inline Vec softmax(const Vec& logits) {
  if (logits.size() == 0) throw ShapeError("softmax of empty vector");
  const double max_logit = logits.maxCoeff();
  Vec expd = (logits.array() - max_logit).exp();
  return expd / expd.sum();
}

struct Prediction {
  Vec probs;  // on the simplex
  ClassLabel top1;
  ClassLabel top2;
  double top1_conf = 0.0;
  double top2_conf = 0.0;
};

inline Prediction make_prediction(const Vec& probs) {
  if (probs.size() != static_cast<Eigen::Index>(ClassLabel::count())) {
    throw ShapeError("prediction needs one probability per class");
  }
  Prediction pred;
  pred.probs = probs;
  Eigen::Index best = 0, second = -1;
  for (Eigen::Index i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (i == best) continue;
    if (second < 0 || probs[i] > probs[second]) second = i;
  }
  pred.top1 = ClassLabel(static_cast<std::size_t>(best));
  pred.top2 = ClassLabel(static_cast<std::size_t>(second));
  pred.top1_conf = probs[best];
  pred.top2_conf = probs[second];
  return pred;
}

// Categorical cross-entropy on an existing probability vector, floored so a
// zero probability stays finite.
inline double loss(const Prediction& prediction, ClassLabel label) {
  const double p = prediction.probs[static_cast<Eigen::Index>(label.index())];
  return -std::log(std::max(p, 1e-12));
}

// Same loss straight from logits; the log1p path keeps it strictly positive
// even when the target class saturates.
inline double cross_entropy_from_logits(const Vec& logits, Eigen::Index label) {
  const double max_logit = logits.maxCoeff();
  double sum_others = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (i != label) sum_others += std::exp(logits[i] - max_logit);
  }
  if (logits[label] >= max_logit) {
    return std::log1p(sum_others);
  }
  return std::log(std::exp(logits[label] - max_logit) + sum_others) -
         (logits[label] - max_logit);
}

struct FusionTrace {
  Vec input;      // concatenated feature
  Vec pre;        // fusion pre-activation
  Vec act;        // after ReLU (and dropout when training)
  Vec drop_mask;  // empty when dropout is off
  Vec logits;
  Vec probs;
};

struct SampleTrace {
  bool has_encoder = false;
  EncoderTrace enc;
  FusionTrace fus;
};

namespace detail {

inline Vec concat_features(const ModelParams& params, const Vec* image_feature,
                           const Vec* text_feature) {
  Vec input(params.input_dim());
  Eigen::Index offset = 0;
  if (params.uses_image()) {
    if (!image_feature) throw ShapeError("image feature required in this mode");
    if (image_feature->size() != params.dims.image_dim) {
      throw ShapeError("image feature has dimension " +
                       std::to_string(image_feature->size()) + ", expected " +
                       std::to_string(params.dims.image_dim));
    }
    input.segment(0, params.dims.image_dim) = *image_feature;
    offset = params.dims.image_dim;
  } else if (image_feature) {
    throw ShapeError("image feature not accepted in text_only mode");
  }
  if (params.uses_text()) {
    const Eigen::Index width = 2 * params.dims.encoder.hidden;
    if (!text_feature) throw ShapeError("text feature required in this mode");
    if (text_feature->size() != width) {
      throw ShapeError("text feature has dimension " +
                       std::to_string(text_feature->size()) + ", expected " +
                       std::to_string(width));
    }
    input.segment(offset, width) = *text_feature;
  } else if (text_feature) {
    throw ShapeError("text feature not accepted in image_only mode");
  }
  return input;
}

inline FusionTrace fusion_forward(const ModelParams& params, Vec input, double dropout,
                                  Rng* dropout_rng) {
  FusionTrace trace;
  trace.input = std::move(input);
  trace.pre = params.fusion_w * trace.input + params.fusion_b.col(0);
  trace.act = trace.pre.cwiseMax(0.0);
  if (dropout > 0.0 && dropout_rng) {
    // inverted dropout: kept units scaled by 1/(1-p)
    trace.drop_mask.resize(trace.act.size());
    const double keep_scale = 1.0 / (1.0 - dropout);
    for (Eigen::Index i = 0; i < trace.act.size(); ++i) {
      trace.drop_mask[i] = dropout_rng->uniform01() < dropout ? 0.0 : keep_scale;
    }
    trace.act = trace.act.cwiseProduct(trace.drop_mask);
  }
  trace.logits = params.output_w * trace.act + params.output_b.col(0);
  trace.probs = softmax(trace.logits);
  return trace;
}

}  // namespace detail

// Evaluation-time forward pass (dropout off). In ablation modes the absent
// feature must be omitted (nullptr), not zeroed.
inline Prediction forward(const ModelParams& params, const Vec* image_feature,
                          const Vec* text_feature) {
  FusionTrace trace = detail::fusion_forward(
      params, detail::concat_features(params, image_feature, text_feature), 0.0, nullptr);
  return make_prediction(trace.probs);
}

// Training-time forward keeping every intermediate needed by the backward
// pass. `token_matrix` is ignored in image_only mode.
inline SampleTrace model_forward(const ModelParams& params, const Vec* image_feature,
                                 const Mat* token_matrix, double dropout,
                                 Rng* dropout_rng) {
  SampleTrace trace;
  Vec text_feature;
  const Vec* text_ptr = nullptr;
  if (params.uses_text()) {
    if (!token_matrix) throw ShapeError("token matrix required in this mode");
    trace.enc = encode_with_trace(*token_matrix, *params.encoder);
    trace.has_encoder = true;
    text_feature = trace.enc.feature;
    text_ptr = &text_feature;
  }
  trace.fus = detail::fusion_forward(
      params, detail::concat_features(params, image_feature, text_ptr), dropout,
      dropout_rng);
  return trace;
}

// Accumulates scale * dLoss/dTheta for one sample into `grads` (a zeroed
// ModelParams mirror). d_embed, when given, receives input-embedding
// gradients for fine-tuning.
inline void model_backward(const ModelParams& params, const SampleTrace& trace,
                           ClassLabel label, double scale, ModelParams& grads,
                           Mat* d_embed = nullptr) {
  Vec d_logits = trace.fus.probs;
  d_logits[static_cast<Eigen::Index>(label.index())] -= 1.0;
  d_logits *= scale;

  grads.output_w += d_logits * trace.fus.act.transpose();
  grads.output_b.col(0) += d_logits;

  Vec d_act = params.output_w.transpose() * d_logits;
  if (trace.fus.drop_mask.size() > 0) d_act = d_act.cwiseProduct(trace.fus.drop_mask);
  Vec d_pre = (trace.fus.pre.array() > 0.0).select(d_act, 0.0);

  grads.fusion_w += d_pre * trace.fus.input.transpose();
  grads.fusion_b.col(0) += d_pre;

  if (params.uses_text() && trace.has_encoder && trace.enc.input.rows() > 0) {
    const Vec d_input = params.fusion_w.transpose() * d_pre;
    const Eigen::Index offset = params.uses_image() ? params.dims.image_dim : 0;
    const Vec d_text = d_input.segment(offset, 2 * params.dims.encoder.hidden);
    EncoderGrads enc_grads = zero_encoder_grads(*params.encoder);
    encoder_backward(trace.enc, *params.encoder, d_text, enc_grads, d_embed);
    grads.encoder->fwd.w_in += enc_grads.fwd.w_in;
    grads.encoder->fwd.w_rec += enc_grads.fwd.w_rec;
    grads.encoder->fwd.bias += enc_grads.fwd.bias;
    grads.encoder->bwd.w_in += enc_grads.bwd.w_in;
    grads.encoder->bwd.w_rec += enc_grads.bwd.w_rec;
    grads.encoder->bwd.bias += enc_grads.bwd.bias;
    grads.encoder->attn.proj += enc_grads.attn.proj;
    grads.encoder->attn.score += enc_grads.attn.score;
  }
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. Moment tensors mirror the visit_tensors order.
class AdamState {
 public:
  explicit AdamState(const ModelParams& params) {
    visit_tensors(const_cast<ModelParams&>(params), [this](const char*, Mat& t) {
      m_.push_back(Mat::Zero(t.rows(), t.cols()));
      v_.push_back(Mat::Zero(t.rows(), t.cols()));
    });
  }

  long step_count() const { return t_; }

  void step(ModelParams& params, const ModelParams& grads, const AdamConfig& config) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t_));

    std::vector<Mat*> param_list, grad_list;
    visit_tensors(params, [&](const char*, Mat& t) { param_list.push_back(&t); });
    visit_tensors(const_cast<ModelParams&>(grads),
                  [&](const char*, Mat& t) { grad_list.push_back(&t); });
    if (param_list.size() != m_.size() || grad_list.size() != m_.size()) {
      throw ShapeError("optimizer state does not match parameter set");
    }

    for (std::size_t k = 0; k < param_list.size(); ++k) {
      const Mat& g = *grad_list[k];
      if (g.rows() != m_[k].rows() || g.cols() != m_[k].cols()) {
        throw ShapeError("gradient shape mismatch in Adam step");
      }
      m_[k] = config.beta1 * m_[k] + (1.0 - config.beta1) * g;
      v_[k] = config.beta2 * v_[k] + (1.0 - config.beta2) * g.cwiseProduct(g);
      const Mat m_hat = m_[k] / bc1;
      const Mat v_hat = v_[k] / bc2;
      param_list[k]->array() -=
          config.learning_rate * m_hat.array() / (v_hat.array().sqrt() + config.epsilon);
    }
  }

 private:
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
                      const AdamConfig& config) {
  state.step(params, grads, config);
}

}  // namespace doctriage

#endif  // DOCTRIAGE_MODEL_HPP
