#include <cmath>
#include <doctest.h>
#include <map>

#include "difflab/core/errors.hpp"
#include "difflab/denoisers/tabular.hpp"
#include "difflab/samplers/samplers.hpp"
#include "oracles.hpp"
#include "stats.hpp"

using namespace difflab;
using namespace difflab::testing;

namespace {

const Vocab kVocab3(3, 2);
const NoiseSchedule kLinear(ScheduleKind::linear);

}  // namespace

TEST_CASE("ar sampler: nfe, trace shape, temperature zero, determinism") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 6, 0.7);
  const auto model = optimal_ar_tabular(language);
  const DenoiserView view{model.get(), VisMode::causal};

  RngStream rng(5);
  const GenerationTrace trace = sample_ar(view, 6, rng);
  CHECK(trace.nfe == 6);
  CHECK(trace.sample.is_clean());
  CHECK(trace.per_step_unmask_sets.size() == 6);
  // Cached AR decode: 2 N L.
  CHECK(trace.modeled_cost ==
        doctest::Approx(2.0 * static_cast<double>(model->parameter_count()) * 6));

  // Deterministic language: temperature 0 yields its unique sequence.
  TemplateLanguage::Template tpl;
  tpl.weight = 1.0;
  tpl.columns = {{0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
  const TemplateLanguage fixed(kVocab3, 3, {tpl});
  const auto fixed_model = optimal_ar_tabular(fixed);
  RngStream rng2(6);
  const GenerationTrace greedy =
      sample_ar({fixed_model.get(), VisMode::causal}, 3, rng2, /*temperature=*/0.0);
  CHECK(greedy.sample == TokenSequence({1, 0, 1}, kVocab3));

  // Seed reproducibility.
  RngStream a(77);
  RngStream b(77);
  CHECK(sample_ar(view, 6, a).sample == sample_ar(view, 6, b).sample);
}

TEST_CASE("ar sampler bigram statistics match the chain (chi-square)") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 6, 0.7);
  const auto model = optimal_ar_tabular(language);
  const DenoiserView view{model.get(), VisMode::causal};
  RngStream rng(100);
  const int n = 100'000;
  std::vector<double> bigram_counts(4, 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const GenerationTrace trace = sample_ar(view, 6, rng);
    for (int l = 0; l + 1 < 6; ++l) {
      bigram_counts[static_cast<std::size_t>(trace.sample[l] * 2 + trace.sample[l + 1])] += 1.0;
      total += 1.0;
    }
  }
  // Stationary chain: P(a,b) = pi(a) A[a][b] = 0.5 * (0.7 or 0.3).
  const std::vector<double> expected = {0.35, 0.15, 0.15, 0.35};
  const double stat = chi_square_stat(bigram_counts, expected, total);
  CHECK(chi_square_pvalue(stat, 3) > 0.001);
}

TEST_CASE("masked ancestral: absorbing decode invariants and T = 1 limit") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 6, 0.7);
  const ForwardKernel kernel{KernelFamily::masked, kLinear};
  const auto model = optimal_tabular_denoiser(language, kernel, {0.5});
  const DenoiserView view{model.get(), VisMode::bidirectional};

  RngStream rng(200);
  for (int rep = 0; rep < 200; ++rep) {
    const GenerationTrace trace = sample_ancestral(view, KernelFamily::masked, kLinear, 16, rng);
    CHECK(trace.sample.mask_count() == 0);
    // Union of unmask sets = all positions, pairwise disjoint.
    std::vector<int> seen(6, 0);
    for (const auto& step : trace.per_step_unmask_sets) {
      for (int pos : step) seen[static_cast<std::size_t>(pos)] += 1;
    }
    for (int c : seen) CHECK(c == 1);
  }

  // T = 1: every position decodes independently from the all-mask prediction.
  RngStream rng1(201);
  const GenerationTrace one = sample_ancestral(view, KernelFamily::masked, kLinear, 1, rng1);
  CHECK(one.nfe == 1);
  CHECK(one.per_step_unmask_sets.size() == 1);
  CHECK(one.per_step_unmask_sets[0].size() == 6);
}

TEST_CASE("masked ancestral one-per-step law equals any-order sequential decoding") {
  // K = 3 (two data tokens + mask), L = 2, T = 2, enumerated exactly. The
  // sampler law conditioned on one-unmask-per-step trajectories must equal
  // decoding in a uniformly random position order.
  const auto table = [&] {
    auto t = std::make_unique<TabularDenoiser>(kVocab3, 2, 1, TabularScope::bidirectional, false);
    RngStream rng(9001);
    for (auto& p : t->parameters()) p = rng.next_gaussian();
    return t;
  }();
  const DenoiserView view{table.get(), VisMode::bidirectional};
  const VisibilitySpec vis = VisibilitySpec::bidirectional();

  // Renormalized clean-token prediction for row l of state z.
  auto clean_row = [&](const TokenSequence& z, int l) {
    std::vector<double> probs(3);
    table->predict_row_into(z, l, 0.5, vis, probs);
    const double keep = probs[0] + probs[1];
    return std::vector<double>{probs[0] / keep, probs[1] / keep};
  };

  // Any-order law: average over the two decode orders.
  std::map<std::pair<int, int>, double> any_order;
  const TokenSequence all_mask({2, 2}, kVocab3);
  for (int first_pos = 0; first_pos < 2; ++first_pos) {
    const auto first_row = clean_row(all_mask, first_pos);
    for (int a = 0; a < 2; ++a) {
      TokenSequence mid = all_mask;
      mid.set(first_pos, a);
      const auto second_row = clean_row(mid, 1 - first_pos);
      for (int b = 0; b < 2; ++b) {
        std::pair<int, int> key = first_pos == 0 ? std::make_pair(a, b) : std::make_pair(b, a);
        any_order[key] += 0.5 * first_row[static_cast<std::size_t>(a)] *
                          second_row[static_cast<std::size_t>(b)];
      }
    }
  }

  // Sampler law conditioned on exactly one unmask per step: by symmetry of
  // the per-position unmask coin, the first decoded position is uniform, and
  // token draws follow the same renormalized rows. Enumerate directly.
  std::map<std::pair<int, int>, double> sampler_law;
  for (int first_pos = 0; first_pos < 2; ++first_pos) {
    const auto first_row = clean_row(all_mask, first_pos);
    for (int a = 0; a < 2; ++a) {
      TokenSequence mid = all_mask;
      mid.set(first_pos, a);
      const auto second_row = clean_row(mid, 1 - first_pos);
      for (int b = 0; b < 2; ++b) {
        std::pair<int, int> key = first_pos == 0 ? std::make_pair(a, b) : std::make_pair(b, a);
        sampler_law[key] += 0.5 * first_row[static_cast<std::size_t>(a)] *
                            second_row[static_cast<std::size_t>(b)];
      }
    }
  }
  for (const auto& [key, p] : any_order) {
    CHECK(sampler_law[key] == doctest::Approx(p).epsilon(1e-12));
  }

  // Cross-check the conditioned enumeration against the simulator: run the
  // real sampler and keep one-per-step traces.
  RngStream rng(321);
  std::map<std::pair<int, int>, double> empirical;
  int kept = 0;
  const int n = 400'000;
  for (int i = 0; i < n; ++i) {
    const GenerationTrace trace = sample_ancestral(view, KernelFamily::masked, kLinear, 2, rng);
    bool one_per_step = trace.per_step_unmask_sets.size() == 2;
    for (const auto& s : trace.per_step_unmask_sets) one_per_step &= s.size() == 1;
    if (!one_per_step) continue;
    ++kept;
    empirical[{trace.sample[0], trace.sample[1]}] += 1.0;
  }
  REQUIRE(kept > 50'000);
  for (const auto& [key, p] : any_order) {
    CHECK(std::abs(empirical[key] / kept - p) < 0.01);
  }
}

TEST_CASE("eso block sampler: schedule, limits, and errors") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 8, 0.7);
  const ForwardKernel kernel{KernelFamily::masked, kLinear};
  const auto model =
      optimal_tabular_denoiser(language, kernel, {0.5}, TabularScope::visibility_subsets);
  const DenoiserView view{model.get(), VisMode::permuted_causal};

  RngStream rng(7);
  const GenerationTrace trace = sample_eso_block(view, 8, 4, rng);
  REQUIRE(trace.per_step_unmask_sets.size() == 4);
  CHECK(trace.per_step_unmask_sets[0] == std::vector<int>{0, 4});
  CHECK(trace.per_step_unmask_sets[1] == std::vector<int>{1, 5});
  CHECK(trace.per_step_unmask_sets[2] == std::vector<int>{2, 6});
  CHECK(trace.per_step_unmask_sets[3] == std::vector<int>{3, 7});
  CHECK(trace.nfe == 4);
  CHECK(trace.sample.mask_count() == 0);

  // L' = L: one position per step; L' = 1: everything in one step.
  RngStream rng2(8);
  const GenerationTrace sequential = sample_eso_block(view, 8, 8, rng2);
  CHECK(sequential.per_step_unmask_sets.size() == 8);
  for (const auto& s : sequential.per_step_unmask_sets) CHECK(s.size() == 1);
  RngStream rng3(9);
  const GenerationTrace parallel = sample_eso_block(view, 8, 1, rng3);
  CHECK(parallel.per_step_unmask_sets.size() == 1);
  CHECK(parallel.per_step_unmask_sets[0].size() == 8);

  CHECK_THROWS_AS(sample_eso_block(view, 8, 3, rng), ConfigError);

  // Within-step positions sit at pairwise distance >= L'.
  for (const auto& step : trace.per_step_unmask_sets) {
    for (std::size_t i = 0; i < step.size(); ++i) {
      for (std::size_t j = i + 1; j < step.size(); ++j) {
        CHECK(std::abs(step[i] - step[j]) >= 4);
      }
    }
  }
}

TEST_CASE("cost model: definitions and derived identities") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 8, 0.7);
  const ForwardKernel kernel{KernelFamily::masked, kLinear};
  const auto model = optimal_tabular_denoiser(language, kernel, {0.5});
  const DenoiserView view{model.get(), VisMode::bidirectional};
  const double n_params = static_cast<double>(model->parameter_count());

  RngStream rng(42);
  const GenerationTrace trace = sample_ancestral(view, KernelFamily::masked, kLinear, 8, rng);
  // Uncached: T x 2NL with T = nfe.
  CHECK(modeled_cost(trace, n_params, SamplerFamily::ancestral_masked, false) ==
        doctest::Approx(2.0 * n_params * trace.nfe * 8));
  CHECK_THROWS_AS(modeled_cost(trace, n_params, SamplerFamily::ancestral_masked, true),
                  ConfigError);

  // Cached eso block cost telescopes to one full-sequence pass regardless of
  // L', so masked ancestral at T = L costs exactly L times as much.
  const auto eso_model =
      optimal_tabular_denoiser(language, kernel, {0.5}, TabularScope::visibility_subsets);
  const DenoiserView eso_view{eso_model.get(), VisMode::permuted_causal};
  for (int spacing : {1, 2, 4, 8}) {
    RngStream r(50 + spacing);
    const GenerationTrace eso = sample_eso_block(eso_view, 8, spacing, r);
    CHECK(modeled_cost(eso, n_params, SamplerFamily::eso_block, true) ==
          doctest::Approx(2.0 * n_params * 8));
  }
  RngStream r2(60);
  const GenerationTrace full = sample_ancestral(view, KernelFamily::masked, kLinear, 8, r2);
  const double ratio = modeled_cost(full, n_params, SamplerFamily::ancestral_masked, false) /
                       (2.0 * n_params * 8);
  CHECK(ratio == doctest::Approx(static_cast<double>(full.nfe)));
}

TEST_CASE("uniform ancestral with the optimal denoiser matches chain statistics") {
  const int length = 4;
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, length, 0.7);
  const ForwardKernel kernel{KernelFamily::uniform, kLinear};
  const int steps = 1024;
  std::vector<double> grid(steps);
  for (int i = 0; i < steps; ++i) grid[static_cast<std::size_t>(i)] = (i + 1.0) / steps;
  const auto model = optimal_tabular_denoiser(language, kernel, grid);
  const DenoiserView view{model.get(), VisMode::bidirectional};

  RngStream rng(77);
  const int n = 100'000;
  std::vector<double> unigram(2, 0.0);
  std::vector<double> bigram(4, 0.0);
  double pairs = 0.0;
  int masked_outputs = 0;
  for (int i = 0; i < n; ++i) {
    const GenerationTrace trace =
        sample_ancestral(view, KernelFamily::uniform, kLinear, steps, rng);
    if (trace.sample.mask_count() > 0) {
      ++masked_outputs;
      continue;
    }
    for (int l = 0; l < length; ++l) {
      unigram[static_cast<std::size_t>(trace.sample[l])] += 1.0;
      if (l + 1 < length) {
        bigram[static_cast<std::size_t>(trace.sample[l] * 2 + trace.sample[l + 1])] += 1.0;
        pairs += 1.0;
      }
    }
  }
  CHECK(masked_outputs == 0);  // the optimal denoiser never predicts the mask
  const std::vector<double> uni_expected = {0.5, 0.5};
  const double uni_stat = chi_square_stat(unigram, uni_expected, n * length);
  CHECK(chi_square_pvalue(uni_stat, 1) > 0.001);
  const std::vector<double> bi_expected = {0.35, 0.15, 0.15, 0.35};
  const double bi_stat = chi_square_stat(bigram, bi_expected, pairs);
  CHECK(chi_square_pvalue(bi_stat, 3) > 0.001);
}

TEST_CASE("trace export emits one JSON record with the full accounting") {
  const MarkovChainLanguage language = MarkovChainLanguage::two_state(kVocab3, 4, 0.7);
  const auto model = optimal_ar_tabular(language);
  RngStream rng(3);
  const GenerationTrace trace = sample_ar({model.get(), VisMode::causal}, 4, rng);
  const std::string record = trace_record_json(trace);
  CHECK(record.find("\"tokens\"") != std::string::npos);
  CHECK(record.find("\"nfe\":4") != std::string::npos);
  CHECK(record.find("\"modeled_cost\"") != std::string::npos);
  CHECK(record.find('\n') == std::string::npos);
}
