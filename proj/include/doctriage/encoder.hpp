#ifndef DOCTRIAGE_ENCODER_HPP
#define DOCTRIAGE_ENCODER_HPP

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "doctriage/error.hpp"
#include "doctriage/rng.hpp"

namespace doctriage {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct EncoderDims {
  int d_emb = 100;
  int hidden = 128;
  int attention = 64;
};

// One recurrence direction. The four gates are stacked row-wise in the order
// input, forget, cell, output: w_in is (4h x d_emb), w_rec is (4h x h),
// bias is (4h x 1).
struct GateStack {
  Mat w_in;
  Mat w_rec;
  Mat bias;
};

// Additive attention: score_t = score . tanh(proj * H_t).
struct AttentionParams {
  Mat proj;   // a x 2h
  Mat score;  // a x 1
};

struct EncoderParams {
  EncoderDims dims;
  GateStack fwd;
  GateStack bwd;
  AttentionParams attn;
};

struct TextFeature {
  Vec vector;             // 2h, all-zero iff the sequence is empty
  Vec attention_weights;  // per-token simplex weights, empty iff sequence empty
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Orthogonal h x h matrix from a QR decomposition of a Gaussian draw, sign
// fixed by the diagonal of R so the result is unique.
inline Mat orthogonal_matrix(int n, Rng& rng) {
  Mat g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

inline void init_gate_stack(GateStack& gs, int d_in, int h, Rng& rng) {
  gs.w_in.resize(4 * h, d_in);
  for (Eigen::Index i = 0; i < gs.w_in.size(); ++i) {
    gs.w_in.data()[i] = rng.uniform(-0.05, 0.05);
  }
  gs.w_rec.resize(4 * h, h);
  for (int gate = 0; gate < 4; ++gate) {
    gs.w_rec.middleRows(gate * h, h) = orthogonal_matrix(h, rng);
  }
  gs.bias = Mat::Zero(4 * h, 1);
  gs.bias.block(h, 0, h, 1).setOnes();  // forget gate bias 1
}

}  // namespace detail

inline EncoderParams init_encoder_params(const EncoderDims& dims, Rng& rng) {
  if (dims.d_emb <= 0 || dims.hidden <= 0 || dims.attention <= 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  EncoderParams params;
  params.dims = dims;
  detail::init_gate_stack(params.fwd, dims.d_emb, dims.hidden, rng);
  detail::init_gate_stack(params.bwd, dims.d_emb, dims.hidden, rng);
  params.attn.proj.resize(dims.attention, 2 * dims.hidden);
  for (Eigen::Index i = 0; i < params.attn.proj.size(); ++i) {
    params.attn.proj.data()[i] = rng.uniform(-0.05, 0.05);
  }
  params.attn.score.resize(dims.attention, 1);
  for (Eigen::Index i = 0; i < params.attn.score.size(); ++i) {
    params.attn.score.data()[i] = rng.uniform(-0.05, 0.05);
  }
  return params;
}

namespace detail {

// Per-direction forward pass bookkeeping; row t holds step t of that
// direction's own traversal order.
struct DirectionTrace {
  Mat gates;      // T x 4h, activated (i, f, g, o)
  Mat cells;      // T x h
  Mat cell_tanh;  // T x h
  Mat hidden;     // T x h
};

inline DirectionTrace run_direction(const Mat& inputs, const GateStack& gs, int h) {
  const Eigen::Index steps = inputs.rows();
  DirectionTrace trace;
  trace.gates.resize(steps, 4 * h);
  trace.cells.resize(steps, h);
  trace.cell_tanh.resize(steps, h);
  trace.hidden.resize(steps, h);

  Vec h_prev = Vec::Zero(h);
  Vec c_prev = Vec::Zero(h);
  for (Eigen::Index t = 0; t < steps; ++t) {
    Vec pre = gs.w_in * inputs.row(t).transpose() + gs.w_rec * h_prev + gs.bias.col(0);
    Vec gate_i = pre.segment(0, h).unaryExpr([](double v) { return sigmoid(v); });
    Vec gate_f = pre.segment(h, h).unaryExpr([](double v) { return sigmoid(v); });
    Vec gate_g = pre.segment(2 * h, h).array().tanh();
    Vec gate_o = pre.segment(3 * h, h).unaryExpr([](double v) { return sigmoid(v); });

    Vec c = gate_f.cwiseProduct(c_prev) + gate_i.cwiseProduct(gate_g);
    Vec tc = c.array().tanh();
    Vec hidden = gate_o.cwiseProduct(tc);

    trace.gates.row(t).segment(0, h) = gate_i.transpose();
    trace.gates.row(t).segment(h, h) = gate_f.transpose();
    trace.gates.row(t).segment(2 * h, h) = gate_g.transpose();
    trace.gates.row(t).segment(3 * h, h) = gate_o.transpose();
    trace.cells.row(t) = c.transpose();
    trace.cell_tanh.row(t) = tc.transpose();
    trace.hidden.row(t) = hidden.transpose();

    h_prev = hidden;
    c_prev = c;
  }
  return trace;
}

}  // namespace detail

struct EncoderTrace {
  Mat input;                   // T x d_emb
  detail::DirectionTrace fwd;  // left-to-right
  detail::DirectionTrace bwd;  // over the reversed sequence
  Mat concat;                  // T x 2h, row t = [fwd h_t, bwd state at position t]
  Mat attn_tanh;               // T x a
  Vec attn_weights;            // T, simplex
  Vec feature;                 // 2h
};

inline EncoderTrace encode_with_trace(const Mat& input, const EncoderParams& params) {
  if (input.rows() > 0 && input.cols() != params.dims.d_emb) {
    throw ShapeError("token matrix has " + std::to_string(input.cols()) +
                     " columns, expected " + std::to_string(params.dims.d_emb));
  }
  if (!input.allFinite()) throw NumericError("non-finite encoder input");

  const int h = params.dims.hidden;
  EncoderTrace trace;
  trace.input = input;
  const Eigen::Index steps = input.rows();
  if (steps == 0) {
    trace.feature = Vec::Zero(2 * h);
    trace.attn_weights = Vec();
    return trace;
  }

  trace.fwd = detail::run_direction(input, params.fwd, h);
  trace.bwd = detail::run_direction(input.colwise().reverse(), params.bwd, h);

  trace.concat.resize(steps, 2 * h);
  for (Eigen::Index t = 0; t < steps; ++t) {
    trace.concat.row(t).segment(0, h) = trace.fwd.hidden.row(t);
    trace.concat.row(t).segment(h, h) = trace.bwd.hidden.row(steps - 1 - t);
  }

  // e_t = score . tanh(proj H_t), alpha = softmax(e), feature = sum alpha_t H_t
  trace.attn_tanh = (trace.concat * params.attn.proj.transpose()).array().tanh();
  Vec scores = trace.attn_tanh * params.attn.score.col(0);
  const double max_score = scores.maxCoeff();
  Vec expd = (scores.array() - max_score).exp();
  trace.attn_weights = expd / expd.sum();
  trace.feature = trace.concat.transpose() * trace.attn_weights;
  return trace;
}

inline TextFeature encode_sequence(const Mat& input, const EncoderParams& params) {
  EncoderTrace trace = encode_with_trace(input, params);
  return TextFeature{std::move(trace.feature), std::move(trace.attn_weights)};
}

struct EncoderGrads {
  GateStack fwd;
  GateStack bwd;
  AttentionParams attn;
};

inline EncoderGrads zero_encoder_grads(const EncoderParams& params) {
  EncoderGrads g;
  auto zero_stack = [](const GateStack& src, GateStack& dst) {
    dst.w_in = Mat::Zero(src.w_in.rows(), src.w_in.cols());
    dst.w_rec = Mat::Zero(src.w_rec.rows(), src.w_rec.cols());
    dst.bias = Mat::Zero(src.bias.rows(), src.bias.cols());
  };
  zero_stack(params.fwd, g.fwd);
  zero_stack(params.bwd, g.bwd);
  g.attn.proj = Mat::Zero(params.attn.proj.rows(), params.attn.proj.cols());
  g.attn.score = Mat::Zero(params.attn.score.rows(), params.attn.score.cols());
  return g;
}

namespace detail {

// Backpropagation through time for one direction. d_hidden rows follow the
// direction's own traversal order; d_input (optional) is filled in the same
// order.
inline void direction_backward(const Mat& inputs, const DirectionTrace& trace,
                               const GateStack& gs, const Mat& d_hidden,
                               GateStack& grads, Mat* d_input) {
  const int h = static_cast<int>(trace.hidden.cols());
  const Eigen::Index steps = inputs.rows();
  Vec carry_h = Vec::Zero(h);
  Vec carry_c = Vec::Zero(h);

  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const Vec dh = d_hidden.row(t).transpose() + carry_h;
    const Vec gate_i = trace.gates.row(t).segment(0, h).transpose();
    const Vec gate_f = trace.gates.row(t).segment(h, h).transpose();
    const Vec gate_g = trace.gates.row(t).segment(2 * h, h).transpose();
    const Vec gate_o = trace.gates.row(t).segment(3 * h, h).transpose();
    const Vec tc = trace.cell_tanh.row(t).transpose();
    const Vec c_prev = t > 0 ? Vec(trace.cells.row(t - 1).transpose()) : Vec(Vec::Zero(h));
    const Vec h_prev = t > 0 ? Vec(trace.hidden.row(t - 1).transpose()) : Vec(Vec::Zero(h));

    const Vec d_o = dh.cwiseProduct(tc);
    const Vec dc = dh.cwiseProduct(gate_o).cwiseProduct(
                       (1.0 - tc.array().square()).matrix()) +
                   carry_c;
    const Vec d_f = dc.cwiseProduct(c_prev);
    const Vec d_i = dc.cwiseProduct(gate_g);
    const Vec d_g = dc.cwiseProduct(gate_i);

    Vec d_pre(4 * h);
    d_pre.segment(0, h) =
        d_i.cwiseProduct(gate_i).cwiseProduct((1.0 - gate_i.array()).matrix());
    d_pre.segment(h, h) =
        d_f.cwiseProduct(gate_f).cwiseProduct((1.0 - gate_f.array()).matrix());
    d_pre.segment(2 * h, h) = d_g.cwiseProduct((1.0 - gate_g.array().square()).matrix());
    d_pre.segment(3 * h, h) =
        d_o.cwiseProduct(gate_o).cwiseProduct((1.0 - gate_o.array()).matrix());

    grads.w_in += d_pre * inputs.row(t);
    grads.w_rec += d_pre * h_prev.transpose();
    grads.bias.col(0) += d_pre;
    if (d_input) d_input->row(t) += (gs.w_in.transpose() * d_pre).transpose();

    carry_h = gs.w_rec.transpose() * d_pre;
    carry_c = dc.cwiseProduct(gate_f);
  }
}

}  // namespace detail

// Accumulates analytic gradients of feature . d_feature into `grads`;
// d_input, when given, receives gradients for the embedding rows in use.
inline void encoder_backward(const EncoderTrace& trace, const EncoderParams& params,
                             const Vec& d_feature, EncoderGrads& grads,
                             Mat* d_input = nullptr) {
  const Eigen::Index steps = trace.input.rows();
  if (steps == 0) return;
  const int h = params.dims.hidden;
  if (d_feature.size() != 2 * h) throw ShapeError("upstream gradient size mismatch");
  if (d_input && (d_input->rows() != steps || d_input->cols() != params.dims.d_emb)) {
    throw ShapeError("d_input shape mismatch");
  }

  // attention pooling: feature = concat^T alpha
  Mat d_concat = trace.attn_weights * d_feature.transpose();  // T x 2h
  Vec d_alpha = trace.concat * d_feature;                     // T

  // softmax jacobian
  const double inner = trace.attn_weights.dot(d_alpha);
  Vec d_scores = trace.attn_weights.cwiseProduct((d_alpha.array() - inner).matrix());

  // scores_t = score . tanh(proj H_t)
  grads.attn.score.col(0) += trace.attn_tanh.transpose() * d_scores;
  Mat d_pre = (d_scores * params.attn.score.col(0).transpose()).cwiseProduct(
      (1.0 - trace.attn_tanh.array().square()).matrix());  // T x a
  grads.attn.proj += d_pre.transpose() * trace.concat;
  d_concat += d_pre * params.attn.proj;

  const Mat d_hidden_fwd = d_concat.leftCols(h);
  Mat d_hidden_bwd(steps, h);
  for (Eigen::Index t = 0; t < steps; ++t) {
    d_hidden_bwd.row(t) = d_concat.row(steps - 1 - t).segment(h, h);
  }

  detail::direction_backward(trace.input, trace.fwd, params.fwd, d_hidden_fwd, grads.fwd,
                             d_input);
  const Mat reversed_input = trace.input.colwise().reverse();
  if (d_input) {
    Mat d_rev = Mat::Zero(steps, params.dims.d_emb);
    detail::direction_backward(reversed_input, trace.bwd, params.bwd, d_hidden_bwd,
                               grads.bwd, &d_rev);
    *d_input += d_rev.colwise().reverse();
  } else {
    detail::direction_backward(reversed_input, trace.bwd, params.bwd, d_hidden_bwd,
                               grads.bwd, nullptr);
  }
}

}  // namespace doctriage

#endif  // DOCTRIAGE_ENCODER_HPP
