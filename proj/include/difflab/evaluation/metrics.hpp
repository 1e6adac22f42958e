#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "difflab/objectives/gradients.hpp"
#include "difflab/training/language.hpp"

namespace difflab {

struct NelboEstimate {
  double nelbo_per_token;
  double standard_error;  // per token; 0 for the exact AR likelihood
  std::int64_t draws;
};

// Monte Carlo NELBO over a dataset in the objective's evaluation form.
// t draws follow the module protocol (U[t_min, 1) for the singular-weight
// bounds, U(0,1) for the uniform-state bound); antithetic pairs by default,
// with the standard error computed over independent pair means. Objective
// low_var is rejected: it is a training loss, never a likelihood bound.
NelboEstimate eval_nelbo(const LossSpec& spec, const DenoiserView& view,
                         std::span<const TokenSequence> dataset, int draws_per_sequence,
                         std::uint64_t seed, double t_min = 1e-3, bool antithetic = true);

struct GenPplResult {
  double gen_ppl;
  std::int64_t included;
  std::int64_t excluded;  // zero-probability samples (off-support generation)
};

// exp(- mean per-token log-likelihood of the samples under the exact
// synthetic-language evaluator). Lower is better.
GenPplResult gen_ppl(std::span<const TokenSequence> samples, const SyntheticLanguage& evaluator);

// Entropy of the within-sequence empirical token distribution, averaged over
// samples (diversity proxy).
double mean_sequence_entropy(std::span<const TokenSequence> samples);

struct EvalReport {
  std::string header;  // evaluator-substitution statement
  double nelbo_per_token = 0.0;
  double perplexity = 0.0;
  double gen_ppl = 0.0;
  double mean_entropy = 0.0;
  std::int64_t sample_count = 0;
  double mc_standard_error = 0.0;
};

// Every report names the evaluator substitution explicitly.
std::string evaluator_substitution_header();

}  // namespace difflab
