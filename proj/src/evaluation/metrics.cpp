#include <cmath>
#include <stdexcept>

#include "difflab/core/errors.hpp"
#include "difflab/evaluation/metrics.hpp"
#include "difflab/training/trainer.hpp"

namespace difflab {

NelboEstimate eval_nelbo(const LossSpec& spec, const DenoiserView& view,
                         std::span<const TokenSequence> dataset, int draws_per_sequence,
                         std::uint64_t seed, double t_min, bool antithetic) {
  if (dataset.empty()) throw std::invalid_argument("eval_nelbo: empty dataset");
  if (spec.objective == Objective::low_var) {
    throw ConfigError("eval_nelbo: the low-variance loss is training-only, evaluate mdlm");
  }
  const double length = static_cast<double>(dataset[0].length());

  if (spec.objective == Objective::ar) {
    double total = 0.0;
    for (const auto& x : dataset) total += ar_nll(view, x);
    return {total / (static_cast<double>(dataset.size()) * length), 0.0,
            static_cast<std::int64_t>(dataset.size())};
  }

  if (draws_per_sequence < 1) throw std::invalid_argument("eval_nelbo: need at least one draw");
  // Antithetic pairs are dependent; aggregate per pair so the standard error
  // is computed over independent units.
  const RngStream root(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  std::int64_t units = 0;
  std::int64_t draws = 0;
  std::uint64_t counter = 0;
  for (const auto& x : dataset) {
    const TrainingExample example{x, x.length()};
    RngStream t_rng = root.split(counter * 2 + 1);
    RngStream z_root = root.split(counter * 2 + 2);
    ++counter;
    const std::vector<double> t_draws =
        draw_t_batch(spec.objective, draws_per_sequence, t_min, antithetic, t_rng);
    const int stride = antithetic && draws_per_sequence % 2 == 0 ? 2 : 1;
    for (int d = 0; d < draws_per_sequence; d += stride) {
      double unit = 0.0;
      for (int j = 0; j < stride; ++j) {
        RngStream z_rng = z_root.split(static_cast<std::uint64_t>(d + j));
        unit += objective_sample(spec, view, example, t_draws[static_cast<std::size_t>(d + j)],
                                 z_rng)
                    .value;
        ++draws;
      }
      unit /= stride;
      sum += unit;
      sum_sq += unit * unit;
      ++units;
    }
  }
  const double n = static_cast<double>(units);
  const double mean = sum / n;
  const double var = units > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  const double se = units > 1 ? std::sqrt(var / n) : 0.0;
  return {mean / length, se / length, draws};
}

GenPplResult gen_ppl(std::span<const TokenSequence> samples, const SyntheticLanguage& evaluator) {
  if (samples.empty()) throw std::invalid_argument("gen_ppl: empty sample set");
  double total_log_prob = 0.0;
  std::int64_t included = 0;
  std::int64_t excluded = 0;
  std::int64_t tokens = 0;
  for (const auto& sample : samples) {
    const double lp = evaluator.log_prob(sample);
    if (std::isinf(lp)) {
      ++excluded;
      continue;
    }
    total_log_prob += lp;
    tokens += sample.length();
    ++included;
  }
  if (included == 0) {
    throw NumericalError("gen_ppl: every sample had zero probability under the evaluator");
  }
  return {std::exp(-total_log_prob / static_cast<double>(tokens)), included, excluded};
}

double mean_sequence_entropy(std::span<const TokenSequence> samples) {
  if (samples.empty()) throw std::invalid_argument("mean_sequence_entropy: empty sample set");
  double total = 0.0;
  std::vector<double> counts;
  for (const auto& sample : samples) {
    counts.assign(static_cast<std::size_t>(sample.vocab().size_k), 0.0);
    for (int l = 0; l < sample.length(); ++l) counts[static_cast<std::size_t>(sample[l])] += 1.0;
    double entropy = 0.0;
    for (double c : counts) {
      if (c > 0.0) {
        const double p = c / sample.length();
        entropy -= p * std::log(p);
      }
    }
    total += entropy;
  }
  return total / static_cast<double>(samples.size());
}

std::string evaluator_substitution_header() {
  return "evaluator: exact synthetic-language likelihood (desk-scale substitute for a pretrained "
         "LM judge)";
}

}  // namespace difflab
