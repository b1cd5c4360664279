#ifndef DOCTRIAGE_TRAIN_HPP
#define DOCTRIAGE_TRAIN_HPP

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "doctriage/embeddings.hpp"
#include "doctriage/error.hpp"
#include "doctriage/metrics.hpp"
#include "doctriage/model.hpp"
#include "doctriage/parallel.hpp"
#include "doctriage/rng.hpp"

namespace doctriage {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  double dropout = 0.5;
  std::uint64_t seed = 42;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }

  void validate() const {
    if (learning_rate <= 0 || epsilon <= 0 || batch_size <= 0 || max_epochs <= 0 ||
        patience <= 0) {
      throw ConfigError("train config values must be positive");
    }
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) {
      throw ConfigError("adam betas must lie in (0,1)");
    }
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0,1)");
  }
};

// One precomputed training example: frozen image feature and/or embedded
// token matrix (0 x d_emb when the page has no text). token_rows carries the
// vocabulary row per token (-1 for OOV); only embedding fine-tuning reads it.
struct TrainSample {
  std::optional<Vec> image;
  Mat tokens;  // T x d_emb
  std::vector<Eigen::Index> token_rows;
  ClassLabel label;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  ModelParams params;  // best-validation checkpoint (last epoch when no val set)
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::vector<Prediction> predictions;  // sample order
};

namespace detail {

// Adam over individual embedding rows, moments allocated on first touch,
// bias correction by the shared step counter.
class SparseRowAdam {
 public:
  void step(Mat& table, const std::map<Eigen::Index, Eigen::RowVectorXd>& row_grads,
            const AdamConfig& config) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t_));
    for (const auto& [row, grad] : row_grads) {
      auto& [m, v] = moments_.try_emplace(row, Eigen::RowVectorXd::Zero(grad.size()),
                                          Eigen::RowVectorXd::Zero(grad.size()))
                         .first->second;
      m = config.beta1 * m + (1.0 - config.beta1) * grad;
      v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
      table.row(row).array() -= config.learning_rate * (m / bc1).array() /
                                ((v / bc2).array().sqrt() + config.epsilon);
    }
  }

 private:
  std::map<Eigen::Index, std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd>> moments_;
  long t_ = 0;
};

inline Mat tokens_from_table(const TrainSample& sample, const Mat& table, int d_emb) {
  Mat out(static_cast<Eigen::Index>(sample.token_rows.size()), d_emb);
  for (std::size_t t = 0; t < sample.token_rows.size(); ++t) {
    const Eigen::Index row = sample.token_rows[t];
    if (row < 0) {
      out.row(static_cast<Eigen::Index>(t)).setZero();
    } else {
      out.row(static_cast<Eigen::Index>(t)) = table.row(row);
    }
  }
  return out;
}

}  // namespace detail

// `live_table`, when given, re-embeds tokens from the (possibly fine-tuned)
// table instead of the precomputed matrix.
inline Prediction predict_sample(const ModelParams& params, const TrainSample& sample,
                                 const EmbeddingTable* live_table = nullptr) {
  const Vec* image = sample.image ? &*sample.image : nullptr;
  if (params.uses_text()) {
    const Mat tokens =
        live_table
            ? detail::tokens_from_table(sample, live_table->matrix, live_table->dim)
            : sample.tokens;
    const TextFeature feature = encode_sequence(tokens, *params.encoder);
    return forward(params, image, &feature.vector);
  }
  return forward(params, image, nullptr);
}

// Parallel over samples against immutable params; per-index result slots keep
// the output identical at any job count.
inline EvalResult evaluate(const ModelParams& params, const std::vector<TrainSample>& samples,
                           int jobs = 1, const EmbeddingTable* live_table = nullptr) {
  if (samples.empty()) throw ConfigError("cannot evaluate an empty split");
  EvalResult result;
  result.predictions.resize(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    result.predictions[i] = predict_sample(params, samples[i], live_table);
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    result.confusion.accumulate(samples[i].label.index(),
                                result.predictions[i].top1.index());
    if (result.predictions[i].top1 == samples[i].label) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return result;
}

// Epoch loop: seeded shuffle, mini-batch mean gradients, Adam update,
// per-epoch validation accuracy with patience-based early stopping on the
// best validation checkpoint. When `finetune_table` is given, touched
// embedding rows train too (the table is updated in place).
inline TrainResult train(const std::vector<TrainSample>& train_set,
                         const std::vector<TrainSample>& val_set, const ModelDims& dims,
                         Mode mode, const TrainConfig& config, int jobs = 1,
                         EmbeddingTable* finetune_table = nullptr) {
  if (train_set.empty()) throw ConfigError("training split is empty");
  config.validate();

  Rng root(config.seed);
  Rng init_rng = root.stream(0);
  Rng shuffle_rng = root.stream(1);
  Rng dropout_rng = root.stream(2);

  ModelParams params = init_model_params(dims, mode, init_rng);
  AdamState adam(params);
  detail::SparseRowAdam embedding_adam;
  const AdamConfig adam_config = config.adam();

  TrainResult result;
  result.params = params;
  double best_val = -1.0;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      ModelParams grads = zeros_like(params);
      std::map<Eigen::Index, Eigen::RowVectorXd> row_grads;
      for (std::size_t k = start; k < end; ++k) {
        const TrainSample& sample = train_set[order[k]];
        const Vec* image = sample.image ? &*sample.image : nullptr;
        Mat live_tokens;
        const Mat* tokens = nullptr;
        if (params.uses_text()) {
          if (finetune_table) {
            live_tokens = detail::tokens_from_table(sample, finetune_table->matrix,
                                                    dims.encoder.d_emb);
            tokens = &live_tokens;
          } else {
            tokens = &sample.tokens;
          }
        }
        const SampleTrace trace =
            model_forward(params, image, tokens, config.dropout, &dropout_rng);
        loss_sum += cross_entropy_from_logits(
            trace.fus.logits, static_cast<Eigen::Index>(sample.label.index()));
        if (finetune_table && trace.has_encoder && trace.enc.input.rows() > 0) {
          Mat d_embed = Mat::Zero(trace.enc.input.rows(), dims.encoder.d_emb);
          model_backward(params, trace, sample.label, scale, grads, &d_embed);
          for (std::size_t t = 0; t < sample.token_rows.size(); ++t) {
            const Eigen::Index row = sample.token_rows[t];
            if (row < 0) continue;  // OOV rows stay virtual
            auto it = row_grads
                          .try_emplace(row, Eigen::RowVectorXd::Zero(dims.encoder.d_emb))
                          .first;
            it->second += d_embed.row(static_cast<Eigen::Index>(t));
          }
        } else {
          model_backward(params, trace, sample.label, scale, grads);
        }
      }
      adam_step(params, grads, adam, adam_config);
      if (finetune_table && !row_grads.empty()) {
        embedding_adam.step(finetune_table->matrix, row_grads, adam_config);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(stats.train_loss)) {
      throw NumericError("training loss diverged at epoch " + std::to_string(epoch));
    }

    if (!val_set.empty()) {
      stats.val_accuracy = evaluate(params, val_set, jobs, finetune_table).accuracy;
      if (stats.val_accuracy > best_val) {
        best_val = stats.val_accuracy;
        result.params = params;
        result.best_epoch = epoch;
        epochs_since_best = 0;
      } else {
        ++epochs_since_best;
      }
    } else {
      result.params = params;
      result.best_epoch = epoch;
    }
    result.history.push_back(stats);

    if (!val_set.empty() && epochs_since_best >= config.patience) break;
  }
  return result;
}

inline std::string history_to_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_accuracy\n";
  out.precision(17);
  for (const auto& row : history) {
    out << row.epoch << ',' << row.train_loss << ',';
    if (std::isnan(row.val_accuracy)) {
      out << "nan";
    } else {
      out << row.val_accuracy;
    }
    out << '\n';
  }
  return std::move(out).str();
}

}  // namespace doctriage

#endif  // DOCTRIAGE_TRAIN_HPP
