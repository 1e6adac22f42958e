#include <cmath>
#include <doctest.h>

#include "difflab/core/errors.hpp"
#include "difflab/denoisers/tabular.hpp"
#include "difflab/objectives/gradients.hpp"
#include "difflab/objectives/losses.hpp"
#include "oracles.hpp"
#include "stats.hpp"

using namespace difflab;
using namespace difflab::testing;

namespace {

const Vocab kVocab3(3, 2);
const NoiseSchedule kLinear(ScheduleKind::linear);

// Frozen table whose every row is the given distribution.
std::unique_ptr<TabularDenoiser> constant_table(const Vocab& vocab, int length,
                                                std::vector<double> row, int buckets = 1,
                                                bool time_conditioned = false,
                                                TabularScope scope = TabularScope::bidirectional) {
  auto table = std::make_unique<TabularDenoiser>(vocab, length, buckets, scope, time_conditioned);
  for (std::size_t i = 0; i < table->parameters().size(); ++i) {
    table->parameters()[i] = row[i % row.size()];
  }
  table->freeze_as_probabilities();
  return table;
}

// Trainable table with seeded random logits over all (z, position, bucket)
// bidirectional contexts.
std::unique_ptr<TabularDenoiser> random_table(const Vocab& vocab, int length, int buckets,
                                              bool time_conditioned, std::uint64_t seed) {
  auto table = std::make_unique<TabularDenoiser>(vocab, length, buckets,
                                                 TabularScope::bidirectional, time_conditioned);
  RngStream rng(seed);
  for (auto& p : table->parameters()) p = rng.next_gaussian();
  return table;
}

// Random logits over every visibility subset (for the interpolating model).
std::unique_ptr<TabularDenoiser> random_subset_table(const Vocab& vocab, int length,
                                                     std::uint64_t seed) {
  auto table = std::make_unique<TabularDenoiser>(vocab, length, 1,
                                                 TabularScope::visibility_subsets, false);
  RngStream rng(seed);
  for (auto& p : table->parameters()) p = rng.next_gaussian();
  return table;
}

}  // namespace

TEST_CASE("ar_nll trivial cases") {
  // Uniform model: L log K for any clean sequence.
  const auto uniform = constant_table(kVocab3, 4, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1, false,
                                      TabularScope::causal_prefix);
  const DenoiserView view{uniform.get(), VisMode::causal};
  const TokenSequence x({0, 1, 0, 1}, kVocab3);
  CHECK(ar_nll(view, x) == doctest::Approx(4.0 * std::log(3.0)).epsilon(1e-12));

  // L = 1 with p = 0.5 on the observed token.
  const auto half = constant_table(kVocab3, 1, {0.5, 0.5, 0.0}, 1, false,
                                   TabularScope::causal_prefix);
  const DenoiserView view1{half.get(), VisMode::causal};
  CHECK(ar_nll(view1, TokenSequence({0}, kVocab3)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("ar_nll against the chain entropy rate") {
  const int length = 8;
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, length, 0.7);
  const auto model = optimal_ar_tabular(language);
  const DenoiserView view{model.get(), VisMode::causal};
  RngStream rng(31);
  const int n = 100'000;
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += ar_nll(view, language.sample(rng));
  const double expected = language.exact_sequence_nats();
  CHECK(std::abs(total / n - expected) / expected < 0.01);
}

TEST_CASE("mdlm trivial cases") {
  const TokenSequence x({0, 1}, kVocab3);

  SUBCASE("no masked positions gives exactly zero") {
    const auto table = random_table(kVocab3, 2, 1, false, 5);
    const DenoiserView view{table.get(), VisMode::bidirectional};
    RngStream rng(9);
    const LossSample sample = mdlm_nelbo_sample(view, kLinear, x, 1e-9, rng);
    REQUIRE(sample.z_t.mask_count() == 0);
    CHECK(sample.value == 0.0);
  }

  SUBCASE("perfect one-hot denoiser gives exactly zero") {
    auto table = std::make_unique<TabularDenoiser>(kVocab3, 2, 1, TabularScope::bidirectional,
                                                   false);
    // Every context predicts the true x exactly.
    for (int enc = 0; enc < 9; ++enc) {
      const TokenSequence z({enc % 3, enc / 3}, kVocab3);
      for (int l = 0; l < 2; ++l) {
        std::vector<double> row(3, 0.0);
        row[static_cast<std::size_t>(x[l])] = 1.0;
        table->set_row(z, l, 0.5, VisibilitySpec::bidirectional(), row);
      }
    }
    table->freeze_as_probabilities();
    const DenoiserView view{table.get(), VisMode::bidirectional};
    RngStream rng(3);
    for (double t : {0.2, 0.6, 0.95}) {
      CHECK(mdlm_nelbo_sample(view, kLinear, x, t, rng).value == 0.0);
    }
  }

  SUBCASE("weight singularity at t = 0") {
    const auto table = random_table(kVocab3, 2, 1, false, 5);
    const DenoiserView view{table.get(), VisMode::bidirectional};
    RngStream rng(9);
    CHECK_THROWS_AS(mdlm_nelbo_sample(view, kLinear, x, 0.0, rng), NumericalError);
  }
}

TEST_CASE("low-variance loss trivial cases and exact factor relation") {
  const auto uniform = constant_table(kVocab3, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const DenoiserView view{uniform.get(), VisMode::bidirectional};
  const TokenSequence x({0, 1, 0}, kVocab3);

  // t = 1 masks everything: uniform denoiser scores L log K.
  RngStream rng(4);
  const LossSample all_masked = mdlm_low_variance_loss(view, kLinear, x, 1.0, rng);
  CHECK(all_masked.value == doctest::Approx(3.0 * std::log(3.0)).epsilon(1e-12));

  // Single masked position with model probability 1/4 scores log 4.
  const auto quarter = constant_table(kVocab3, 1, {0.25, 0.75, 0.0});
  const DenoiserView view1{quarter.get(), VisMode::bidirectional};
  RngStream rng1(4);
  const LossSample one = mdlm_low_variance_loss(view1, kLinear, TokenSequence({0}, kVocab3), 1.0,
                                                rng1);
  CHECK(one.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // On shared draws the two losses differ exactly by the weight ratio.
  const auto table = random_table(kVocab3, 3, 1, false, 21);
  const DenoiserView rview{table.get(), VisMode::bidirectional};
  for (int rep = 0; rep < 50; ++rep) {
    const double t = 0.05 + 0.9 * (rep / 50.0);
    RngStream a(1000 + rep);
    RngStream b(1000 + rep);
    const LossSample nelbo = mdlm_nelbo_sample(rview, kLinear, x, t, a);
    const LossSample low = mdlm_low_variance_loss(rview, kLinear, x, t, b);
    const AlphaValue av = kLinear.at(t);
    const double ratio = av.alpha_prime / (1.0 - av.alpha) / -1.0;
    CHECK(nelbo.value == doctest::Approx(low.value * ratio).epsilon(1e-12));
    CHECK(nelbo.z_t == low.z_t);
  }
}

TEST_CASE("losses decompose into per-position terms") {
  const auto table = random_table(kVocab3, 3, 8, true, 77);
  const DenoiserView view{table.get(), VisMode::bidirectional};
  const TokenSequence x({0, 1, 1}, kVocab3);
  RngStream rng(12);
  for (double t : {0.15, 0.5, 0.9}) {
    const LossSample duo = duo_nelbo_sample(view, kLinear, x, t, rng);
    double sum = 0.0;
    for (double v : duo.per_position) sum += v;
    CHECK(duo.value == doctest::Approx(sum).epsilon(1e-12));
    const LossSample mdlm = mdlm_nelbo_sample(view, kLinear, x, t, rng);
    sum = 0.0;
    for (double v : mdlm.per_position) sum += v;
    CHECK(mdlm.value == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("duo matched model: the inverse-moment difference term vanishes per position") {
  const TokenSequence x({0, 1}, kVocab3);
  // Frozen matched model: every row predicts the clean token exactly.
  auto table = std::make_unique<TabularDenoiser>(kVocab3, 2, 4, TabularScope::bidirectional, true);
  for (int b = 0; b < 4; ++b) {
    const double tb = (b + 0.5) / 4;
    for (int enc = 0; enc < 9; ++enc) {
      const TokenSequence z({enc % 3, enc / 3}, kVocab3);
      for (int l = 0; l < 2; ++l) {
        std::vector<double> row(3, 0.0);
        row[static_cast<std::size_t>(x[l])] = 1.0;
        table->set_row(z, l, tb, VisibilitySpec::bidirectional(), row);
      }
    }
  }
  table->freeze_as_probabilities();
  const DenoiserView view{table.get(), VisMode::bidirectional};
  RngStream rng(8);
  const double t = 0.4;
  const LossSample sample = duo_nelbo_sample(view, kLinear, x, t, rng);

  // Independent transcription with the difference term dropped (it cancels
  // exactly when x_theta equals the clean one-hot).
  const int k = 3;
  const double a = kLinear.at(t).alpha;
  const double kappa = (1.0 - a) / (k * a + 1.0 - a);
  for (int l = 0; l < 2; ++l) {
    const int i = sample.z_t[l];
    const int m = x[l];
    std::vector<double> xbt(3, 1.0 - a);
    xbt[static_cast<std::size_t>(m)] += k * a;
    double sum_term = 0.0;
    for (int c = 0; c < k; ++c) sum_term += std::log(xbt[static_cast<std::size_t>(i)] / xbt[static_cast<std::size_t>(c)]);
    const bool same = i == m;
    double bracket = -(same ? kappa : 1.0) * sum_term;
    if (!same) bracket -= k * a / (1.0 - a) * std::log(xbt[static_cast<std::size_t>(i)] / xbt[static_cast<std::size_t>(m)]);
    bracket -= (same ? (k - 1) * kappa : -1.0 / kappa) * std::log(kappa);
    const double expected = kLinear.at(t).alpha_prime / (k * a) * bracket;
    CHECK(sample.per_position[static_cast<std::size_t>(l)] ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("duo NELBO matches the discrete-time ELBO oracle (reading arbitration)") {
  // K = 2 and K = 3 time-bucketed tabular models; the vocabulary reading of
  // the inner sum must match the T=4096 discrete ELBO within 1% while the
  // literal sequence reading must not.
  struct Case {
    Vocab vocab;
    std::uint64_t seed;
  };
  for (const Case& c : {Case{Vocab(2, 1), 51}, Case{Vocab(3, 2), 52}}) {
    const auto table = random_table(c.vocab, 1, 64, true, c.seed);
    const DenoiserView view{table.get(), VisMode::bidirectional};
    const TokenSequence x({0}, c.vocab);
    const double oracle = duo_discrete_elbo(view, kLinear, x, 4096);
    const double vocab_reading =
        expected_duo_nelbo(view, kLinear, x, 64 * 200, DuoSumReading::vocabulary);
    CHECK(std::abs(vocab_reading - oracle) / oracle < 0.01);
    const double seq_reading =
        expected_duo_nelbo(view, kLinear, x, 64 * 200, DuoSumReading::sequence);
    CHECK(std::abs(seq_reading - oracle) > std::abs(vocab_reading - oracle) * 10);
  }
}

TEST_CASE("duo Monte Carlo agrees with the exact expectation within 3 SE") {
  const auto table = random_table(kVocab3, 2, 32, true, 60);
  const DenoiserView view{table.get(), VisMode::bidirectional};
  const TokenSequence x({0, 1}, kVocab3);
  const double exact = expected_duo_nelbo(view, kLinear, x, 32 * 200);
  const int n = 100'000;
  std::vector<double> values;
  values.reserve(n);
  RngStream t_rng(61);
  RngStream z_root(62);
  for (int i = 0; i < n; ++i) {
    double t = t_rng.next_unit();
    while (t == 0.0) t = t_rng.next_unit();
    RngStream z_rng = z_root.split(static_cast<std::uint64_t>(i));
    values.push_back(duo_nelbo_sample(view, kLinear, x, t, z_rng).value);
  }
  const MeanVar mv = mean_variance(values);
  const double se = std::sqrt(mv.variance / n);
  CHECK(std::abs(mv.mean - exact) < 3.0 * se);
}

TEST_CASE("mdlm Monte Carlo agrees with enumeration within 3 SE") {
  const auto table = random_table(kVocab3, 2, 1, false, 41);
  const DenoiserView view{table.get(), VisMode::bidirectional};
  const TokenSequence x({1, 0}, kVocab3);
  const double t_min = 1e-3;
  const double exact = expected_masked_objective(view, kLinear, x, false, t_min, 40'000);
  const int n = 200'000;
  std::vector<double> values;
  values.reserve(n);
  RngStream t_rng(43);
  RngStream z_root(44);
  for (int i = 0; i < n; ++i) {
    const double t = t_min + (1.0 - t_min) * t_rng.next_unit();
    RngStream z_rng = z_root.split(static_cast<std::uint64_t>(i));
    values.push_back(mdlm_nelbo_sample(view, kLinear, x, t, z_rng).value);
  }
  const MeanVar mv = mean_variance(values);
  const double se = std::sqrt(mv.variance / n);
  CHECK(std::abs(mv.mean - exact) < 3.0 * se);
}

TEST_CASE("eso reduction identities are exact on shared streams") {
  const auto table = random_subset_table(kVocab3, 3, 71);
  const DenoiserView view{table.get(), VisMode::permuted_causal};
  const TokenSequence x({0, 1, 0}, kVocab3);

  for (double t : {0.2, 0.55, 0.9}) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
      // alpha_0 = 1: equals the masked NELBO on the diffusion substream.
      RngStream eso_rng(seed);
      const LossSample eso1 = esolm_nelbo_sample(view, kLinear, x, {1.0}, t, eso_rng);
      RngStream diff_rng = RngStream(seed).split(2);
      const LossSample mdlm = mdlm_nelbo_sample(view, kLinear, x, t, diff_rng);
      CHECK(eso1.value == mdlm.value);

      // alpha_0 = 0: equals the exact AR NLL; the diffusion term is zero.
      RngStream eso_rng0(seed);
      const LossSample eso0 = esolm_nelbo_sample(view, kLinear, x, {0.0}, t, eso_rng0);
      CHECK(eso0.value == ar_nll({table.get(), VisMode::causal}, x));
    }
  }
}

TEST_CASE("eso Monte Carlo agrees with full enumeration within 3 SE") {
  const auto table = random_subset_table(kVocab3, 2, 72);
  const DenoiserView view{table.get(), VisMode::permuted_causal};
  const TokenSequence x({0, 1}, kVocab3);
  const EsoConfig config{0.5};
  const double t_min = 1e-3;
  const double exact = expected_eso_bound(view, kLinear, x, config, t_min, 40'000);
  const int n = 200'000;
  std::vector<double> values;
  values.reserve(n);
  RngStream t_rng(73);
  RngStream z_root(74);
  for (int i = 0; i < n; ++i) {
    const double t = t_min + (1.0 - t_min) * t_rng.next_unit();
    RngStream rng = z_root.split(static_cast<std::uint64_t>(i));
    values.push_back(esolm_nelbo_sample(view, kLinear, x, config, t, rng).value);
  }
  const MeanVar mv = mean_variance(values);
  const double se = std::sqrt(mv.variance / n);
  CHECK(std::abs(mv.mean - exact) < 3.0 * se);
}

TEST_CASE("expected masked NELBO dominates the exact reverse-process likelihood") {
  const Vocab vocab(3, 2);
  const TokenSequence x({0, 1, 0}, vocab);
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(vocab, 3, 0.75);
  const ForwardKernel kernel{KernelFamily::masked, kLinear};
  const auto optimal = optimal_tabular_denoiser(language, kernel, {0.5});

  // Blend between uniform and the optimal denoiser in probability space.
  auto blended = [&](double lambda) {
    auto table = std::make_unique<TabularDenoiser>(vocab, 3, 1, TabularScope::bidirectional,
                                                   false);
    std::vector<double> probs(3);
    std::vector<int> tokens(3, 0);
    for (int enc = 0; enc < 27; ++enc) {
      int rest = enc;
      for (int l = 0; l < 3; ++l) {
        tokens[static_cast<std::size_t>(l)] = rest % 3;
        rest /= 3;
      }
      const TokenSequence z(tokens, vocab);
      for (int l = 0; l < 3; ++l) {
        optimal->predict_row_into(z, l, 0.5, VisibilitySpec::bidirectional(), probs);
        for (auto& p : probs) p = lambda * p + (1.0 - lambda) / 3.0;
        table->set_row(z, l, 0.5, VisibilitySpec::bidirectional(), probs);
      }
    }
    table->freeze_as_probabilities();
    return table;
  };

  const double t_min = 1e-6;
  double prev_gap = std::numeric_limits<double>::infinity();
  for (double lambda : {0.3, 0.6, 0.9}) {
    const auto model = blended(lambda);
    const DenoiserView view{model.get(), VisMode::bidirectional};
    const double nelbo =
        (1.0 - t_min) * expected_masked_objective(view, kLinear, x, false, t_min, 20'000);
    const double log_p = masked_reverse_log_likelihood(view, kLinear, x, 2048);
    const double gap = nelbo - (-log_p);
    CHECK(gap > -2e-3);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
}
