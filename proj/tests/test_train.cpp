#include <catch2/catch_amalgamated.hpp>

#include "doctriage/checkpoint.hpp"
#include "doctriage/train.hpp"

#include "helpers.hpp"

using namespace doctriage;

namespace {

ModelDims small_dims() {
  ModelDims dims;
  dims.encoder = EncoderDims{4, 4, 3};
  dims.image_dim = 6;
  dims.fusion_dim = 8;
  return dims;
}

// Separable synthetic set: per-class feature direction plus noise, and a
// class-specific token row repeated a few times.
std::vector<TrainSample> synthetic_samples(int per_class, int classes,
                                           const ModelDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainSample> samples;
  for (int c = 0; c < classes; ++c) {
    Vec base = Vec::Zero(dims.image_dim);
    base[c % dims.image_dim] = 2.0;
    base[(c * 3 + 1) % dims.image_dim] = -1.5;
    Eigen::RowVectorXd token = Eigen::RowVectorXd::Zero(dims.encoder.d_emb);
    token[c % dims.encoder.d_emb] = 1.0;
    for (int k = 0; k < per_class; ++k) {
      TrainSample s;
      s.image = base + 0.1 * testutil::random_vector(dims.image_dim, rng);
      const int rows = 1 + static_cast<int>(rng.below(3));
      s.tokens = Mat(rows, dims.encoder.d_emb);
      for (int r = 0; r < rows; ++r) {
        s.tokens.row(r) = token + 0.05 * testutil::random_vector(dims.encoder.d_emb, rng)
                                             .transpose();
      }
      s.label = ClassLabel(static_cast<std::size_t>(c));
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

}  // namespace

TEST_CASE("training overfits a small separable set", "[train]") {
  const ModelDims dims = small_dims();
  const auto train_set = synthetic_samples(4, 3, dims, 1);
  TrainConfig config;
  config.learning_rate = 5e-3;
  config.max_epochs = 150;
  config.patience = 150;
  config.batch_size = 4;
  config.dropout = 0.0;  // the tiny fusion layer cannot spare half its units
  config.seed = 7;

  const TrainResult result = train(train_set, train_set, dims, Mode::full, config);
  CHECK(evaluate(result.params, train_set).accuracy == 1.0);
  for (const auto& row : result.history) {
    CHECK(row.train_loss > 0.0);
    CHECK(std::isfinite(row.train_loss));
  }
}

TEST_CASE("identical seeds produce bit-identical checkpoints", "[train]") {
  testutil::TempDir dir;
  const ModelDims dims = small_dims();
  const auto train_set = synthetic_samples(3, 2, dims, 2);
  const auto val_set = synthetic_samples(2, 2, dims, 3);
  TrainConfig config;
  config.max_epochs = 5;
  config.seed = 99;

  const TrainResult a = train(train_set, val_set, dims, Mode::full, config);
  const TrainResult b = train(train_set, val_set, dims, Mode::full, config);
  save_checkpoint(dir / "a.ckpt", a.params);
  save_checkpoint(dir / "b.ckpt", b.params);
  CHECK(sha256_file_hex(dir / "a.ckpt") == sha256_file_hex(dir / "b.ckpt"));

  config.seed = 100;
  const TrainResult c = train(train_set, val_set, dims, Mode::full, config);
  save_checkpoint(dir / "c.ckpt", c.params);
  CHECK(sha256_file_hex(dir / "a.ckpt") != sha256_file_hex(dir / "c.ckpt"));
}

TEST_CASE("full-batch gradient descent monotonically decreases the loss", "[train]") {
  const ModelDims dims = small_dims();
  const auto samples = synthetic_samples(3, 3, dims, 4);
  Rng rng(5);
  ModelParams params = init_model_params(dims, Mode::full, rng);

  const auto batch_loss = [&]() {
    double sum = 0.0;
    for (const auto& s : samples) {
      const SampleTrace t = model_forward(params, &*s.image, &s.tokens, 0.0, nullptr);
      sum += cross_entropy_from_logits(t.fus.logits,
                                       static_cast<Eigen::Index>(s.label.index()));
    }
    return sum / static_cast<double>(samples.size());
  };

  double previous = batch_loss();
  for (int epoch = 0; epoch < 40; ++epoch) {
    ModelParams grads = zeros_like(params);
    const double scale = 1.0 / static_cast<double>(samples.size());
    for (const auto& s : samples) {
      const SampleTrace t = model_forward(params, &*s.image, &s.tokens, 0.0, nullptr);
      model_backward(params, t, s.label, scale, grads);
    }
    // plain gradient descent step at lr = 1e-3
    std::vector<Mat*> plist;
    std::vector<const Mat*> glist;
    visit_tensors(params, [&](const char*, Mat& t) { plist.push_back(&t); });
    visit_tensors(grads, [&](const char*, Mat& t) { glist.push_back(&t); });
    for (std::size_t k = 0; k < plist.size(); ++k) *plist[k] -= 1e-3 * *glist[k];

    const double current = batch_loss();
    CHECK(current <= previous + 1e-12);
    previous = current;
  }
}

TEST_CASE("text-only training on empty transcripts learns only the prior", "[train]") {
  const ModelDims dims = small_dims();
  std::vector<TrainSample> samples;
  for (int i = 0; i < 8; ++i) {
    TrainSample s;
    s.tokens = Mat(0, dims.encoder.d_emb);  // no OCR text anywhere
    s.label = ClassLabel(i < 6 ? 2 : 5);    // majority class at 6/8
    samples.push_back(std::move(s));
  }
  TrainConfig config;
  config.max_epochs = 30;
  config.patience = 30;
  config.dropout = 0.0;
  config.seed = 11;

  const TrainResult result = train(samples, samples, dims, Mode::text_only, config);
  const EvalResult eval = evaluate(result.params, samples);
  CHECK(eval.accuracy == Catch::Approx(6.0 / 8.0));
  // every page gets the same prediction: the majority class
  for (const auto& pred : eval.predictions) CHECK(pred.top1 == ClassLabel(2));
}

TEST_CASE("empty splits are configuration errors", "[train]") {
  const ModelDims dims = small_dims();
  const auto samples = synthetic_samples(2, 2, dims, 6);
  CHECK_THROWS_AS(train({}, samples, dims, Mode::full, TrainConfig{}), ConfigError);
  Rng rng(7);
  const ModelParams params = init_model_params(dims, Mode::full, rng);
  CHECK_THROWS_AS(evaluate(params, {}), ConfigError);
}

TEST_CASE("evaluation is identical at any job count", "[train]") {
  const ModelDims dims = small_dims();
  const auto samples = synthetic_samples(5, 3, dims, 8);
  Rng rng(9);
  ModelParams params = init_model_params(dims, Mode::full, rng);

  const EvalResult serial = evaluate(params, samples, 1);
  const EvalResult parallel = evaluate(params, samples, 4);
  CHECK(serial.accuracy == parallel.accuracy);
  CHECK(serial.confusion == parallel.confusion);
  REQUIRE(serial.predictions.size() == parallel.predictions.size());
  for (std::size_t i = 0; i < serial.predictions.size(); ++i) {
    CHECK((serial.predictions[i].probs - parallel.predictions[i].probs).norm() == 0.0);
  }
}

TEST_CASE("training history serializes to csv", "[train]") {
  const std::vector<EpochStats> history = {{1, 2.5, 0.5}, {2, 1.25, 0.75}};
  const std::string csv = history_to_csv(history);
  CHECK(csv.find("epoch,train_loss,val_accuracy\n") == 0);
  CHECK(csv.find("1,2.5,0.5\n") != std::string::npos);
  CHECK(csv.find("2,1.25,0.75\n") != std::string::npos);
}
