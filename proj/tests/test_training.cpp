#include <cmath>
#include <cstring>
#include <doctest.h>

#include "difflab/core/errors.hpp"
#include "difflab/denoisers/mlp.hpp"
#include "difflab/scaling/flops.hpp"
#include "difflab/training/optimizer.hpp"
#include "difflab/training/trainer.hpp"

using namespace difflab;

namespace {

const Vocab kVocab3(3, 2);

MlpConfig smoke_mlp_config(bool time_conditioned, std::uint64_t seed) {
  MlpConfig cfg;
  cfg.vocab = kVocab3;
  cfg.length = 4;
  cfg.hidden = {16, 16};
  cfg.time_conditioned = time_conditioned;
  cfg.init_seed = seed;
  return cfg;
}

TrainConfig smoke_train_config(Objective objective, std::int64_t steps, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.loss.objective = objective;
  cfg.batch_size = 16;
  cfg.steps = steps;
  cfg.adamw.weight_decay = 0.01;
  cfg.lr = {LrKind::cosine, 3e-3, 3e-4, 0, 0, steps};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("adamw: zero learning rate leaves parameters unchanged") {
  AdamW opt(3, {});
  std::vector<double> params = {1.0, -2.0, 0.5};
  const std::vector<double> saved = params;
  const std::vector<double> grads = {0.3, -0.1, 2.0};
  opt.step(params, grads, 0.0);
  CHECK(params == saved);
}

TEST_CASE("adamw: decoupled weight decay acts directly on parameters") {
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW opt(2, cfg);
  std::vector<double> params = {2.0, -4.0};
  const std::vector<double> grads = {0.0, 0.0};
  const double lr = 0.05;
  opt.step(params, grads, lr);
  CHECK(params[0] == doctest::Approx(2.0 * (1.0 - lr * 0.1)).epsilon(1e-15));
  CHECK(params[1] == doctest::Approx(-4.0 * (1.0 - lr * 0.1)).epsilon(1e-15));
}

TEST_CASE("adamw: converges on a 1-D quadratic") {
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(1, cfg);
  std::vector<double> theta = {0.0};
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> grad = {2.0 * (theta[0] - 3.0)};
    opt.step(theta, grad, 1e-2);
  }
  CHECK(std::abs(theta[0] - 3.0) < 1e-3);
}

TEST_CASE("adamw: aborts on non-finite gradients") {
  AdamW opt(2, {});
  std::vector<double> params = {1.0, 1.0};
  const std::vector<double> grads = {0.1, std::nan("")};
  CHECK_THROWS_AS(opt.step(params, grads, 1e-3), NumericalError);
  CHECK(params[0] == 1.0);  // untouched
  CHECK(opt.step_count() == 0);
}

TEST_CASE("lr schedule endpoints and clamping") {
  const LrSchedule cosine{LrKind::cosine, 4e-4, 2e-5, 0, 0, 1000};
  CHECK(cosine.at(0) == 4e-4);
  CHECK(cosine.at(1000) == doctest::Approx(2e-5).epsilon(1e-12));
  bool clamped = false;
  CHECK(cosine.at(1500, &clamped) == 2e-5);
  CHECK(clamped);

  // Warmup/constant/decay phases in the scaled proportions: warmup, then
  // constant until two thirds of training, then decay to the floor.
  const LrSchedule wcd{LrKind::warmup_constant_decay, 3e-4, 4e-5, 2, 667, 1000};
  CHECK(wcd.at(0) == 0.0);
  CHECK(wcd.at(2) == 3e-4);  // warmup ends exactly at peak
  CHECK(wcd.at(400) == 3e-4);
  CHECK(wcd.at(667) == 3e-4);
  CHECK(wcd.at(1000) == doctest::Approx(4e-5).epsilon(1e-12));
  CHECK(wcd.at(833) < 3e-4);
  CHECK(wcd.at(833) > 4e-5);
}

TEST_CASE("training is deterministic given seed and config") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 4, 0.7);
  TrainResult results[2];
  std::vector<double> params[2];
  for (int run = 0; run < 2; ++run) {
    MlpDenoiser model(smoke_mlp_config(false, 11));
    results[run] = train(model, language, smoke_train_config(Objective::low_var, 50, 321));
    params[run].assign(model.parameters().begin(), model.parameters().end());
  }
  CHECK(std::memcmp(params[0].data(), params[1].data(), params[0].size() * sizeof(double)) == 0);
  REQUIRE(results[0].history.size() == results[1].history.size());
  for (std::size_t i = 0; i < results[0].history.size(); ++i) {
    CHECK(results[0].history[i].loss == results[1].history[i].loss);
    CHECK(results[0].history[i].grad_norm == results[1].history[i].grad_norm);
  }
}

TEST_CASE("token and FLOP bookkeeping match the scaling cost model exactly") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 4, 0.7);
  MlpDenoiser model(smoke_mlp_config(false, 13));
  const ArchDescriptor descriptor = descriptor_for(model);
  const TrainConfig cfg = smoke_train_config(Objective::low_var, 25, 5);
  const TrainResult result = train(model, language, cfg);
  CHECK(result.total_tokens == 25 * 16 * 4);
  CHECK(result.total_flops ==
        training_flops(descriptor, static_cast<double>(result.total_tokens)).exact);
}

TEST_CASE("random-length option: truncation fraction and length distribution") {
  const int length = 16;
  const Vocab vocab(4, 3);
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(vocab, length, 0.6);
  const DataConfig cfg{0.01};
  RngStream rng(2718);
  const int n = 100'000;
  int truncated = 0;
  std::vector<int> length_counts(static_cast<std::size_t>(length) + 1, 0);
  for (int i = 0; i < n; ++i) {
    const Example ex = draw_example(language, cfg, rng);
    if (ex.effective_length < length) {
      ++truncated;
      ++length_counts[static_cast<std::size_t>(ex.effective_length)];
      // Tail is mask-padded.
      for (int l = ex.effective_length; l < length; ++l) {
        CHECK(ex.tokens[l] == vocab.mask_index);
      }
    } else {
      CHECK(ex.tokens.is_clean());
    }
  }
  const double fraction = static_cast<double>(truncated) / n;
  CHECK(std::abs(fraction - 0.01) < 0.003);
  // Truncated lengths are uniform on {1..L}; check the mean over the ~1000
  // truncated draws (length L itself also occurs when drawn).
  double mean_len = 0.0;
  int short_count = 0;
  for (int l = 1; l <= length; ++l) {
    mean_len += static_cast<double>(l) * length_counts[static_cast<std::size_t>(l)];
    short_count += length_counts[static_cast<std::size_t>(l)];
  }
  mean_len /= short_count;
  CHECK(std::abs(mean_len - (length + 1) / 2.0) < 0.5);
}

TEST_CASE("500-step smoke run decreases the smoothed loss for every objective") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 4, 0.8);
  for (Objective objective : {Objective::ar, Objective::mdlm, Objective::low_var, Objective::duo,
                              Objective::eso}) {
    CAPTURE(objective_name(objective));
    MlpDenoiser model(smoke_mlp_config(objective == Objective::duo, 17));
    TrainConfig cfg = smoke_train_config(objective, 500, 29);
    cfg.loss.eso = {1.0};
    const TrainResult result = train(model, language, cfg);
    REQUIRE(!result.aborted);
    auto window_mean = [&](std::size_t start) {
      double sum = 0.0;
      for (std::size_t i = start; i < start + 5; ++i) sum += result.history[i].loss;
      return sum / 5.0;
    };
    CHECK(window_mean(result.history.size() - 5) < window_mean(0));
  }
}

TEST_CASE("divergence guard aborts with diagnostics") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 4, 0.8);
  MlpDenoiser model(smoke_mlp_config(false, 23));
  TrainConfig cfg = smoke_train_config(Objective::low_var, 400, 31);
  // Negative weight decay inflates the weights until the loss runs away.
  cfg.adamw.weight_decay = -0.3;
  cfg.lr = {LrKind::cosine, 0.3, 0.3, 0, 0, 400};
  cfg.divergence_factor = 2.0;
  cfg.divergence_patience = 5;
  const TrainResult result = train(model, language, cfg);
  CHECK(result.aborted);
  CHECK(result.abort_reason.find("divergence guard") != std::string::npos);
}
