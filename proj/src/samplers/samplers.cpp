#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "difflab/core/errors.hpp"
#include "difflab/samplers/samplers.hpp"

namespace difflab {

namespace {

// The reverse posterior's clean-token slot is by definition mask-free, so
// model mass on the mask index is projected out before decoding.
int draw_clean_token(std::span<const double> probs, const Vocab& vocab, RngStream& rng,
                     double temperature) {
  const int k = vocab.size_k;
  if (temperature == 0.0) {
    int best = -1;
    double best_p = -1.0;
    for (int c = 0; c < k; ++c) {
      if (vocab.is_mask(c)) continue;
      if (probs[static_cast<std::size_t>(c)] > best_p) {
        best_p = probs[static_cast<std::size_t>(c)];
        best = c;
      }
    }
    return best;
  }
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    if (!vocab.is_mask(c)) total += probs[static_cast<std::size_t>(c)];
  }
  if (!(total > 0.0)) {
    throw NumericalError("sampler: predicted distribution has no mass on clean tokens");
  }
  const double u = rng.next_unit() * total;
  double cum = 0.0;
  for (int c = 0; c < k; ++c) {
    if (vocab.is_mask(c)) continue;
    cum += probs[static_cast<std::size_t>(c)];
    if (u < cum) return c;
  }
  for (int c = k - 1; c >= 0; --c) {
    if (!vocab.is_mask(c)) return c;
  }
  throw NumericalError("sampler: vocabulary has no clean tokens");
}

}  // namespace

const char* sampler_family_name(SamplerFamily family) {
  switch (family) {
    case SamplerFamily::ar: return "ar";
    case SamplerFamily::ancestral_masked: return "ancestral_masked";
    case SamplerFamily::ancestral_uniform: return "ancestral_uniform";
    case SamplerFamily::eso_block: return "eso_block";
  }
  return "unknown";
}

SamplerFamily parse_sampler_family(const std::string& name) {
  if (name == "ar") return SamplerFamily::ar;
  if (name == "ancestral_masked") return SamplerFamily::ancestral_masked;
  if (name == "ancestral_uniform") return SamplerFamily::ancestral_uniform;
  if (name == "eso_block") return SamplerFamily::eso_block;
  throw ConfigError("unknown sampler family: " + name);
}

GenerationTrace sample_ar(const DenoiserView& view, int length, RngStream& rng,
                          double temperature) {
  const Vocab& vocab = view.model->vocab();
  if (length != view.model->length()) {
    throw ConfigError("sample_ar: length must match the model context length");
  }
  TokenSequence z = TokenSequence::filled(length, vocab.mask_index, vocab);
  const VisibilitySpec vis = VisibilitySpec::causal();
  std::vector<double> probs(static_cast<std::size_t>(vocab.size_k));
  std::vector<std::vector<int>> sets;
  sets.reserve(static_cast<std::size_t>(length));
  for (int l = 0; l < length; ++l) {
    view.model->predict_row_into(z, l, 0.0, vis, probs);
    z.set(l, draw_clean_token(probs, vocab, rng, temperature));
    sets.push_back({l});
  }
  GenerationTrace trace{std::move(z), length, 0.0, std::move(sets)};
  trace.modeled_cost = modeled_cost(trace, static_cast<double>(view.model->parameter_count()),
                                    SamplerFamily::ar, /*cache=*/true);
  return trace;
}

namespace {

GenerationTrace ancestral_masked(const DenoiserView& view, const NoiseSchedule& schedule,
                                 int steps_t, RngStream& rng, CleanSubstitution substitution) {
  const bool hard_sample = substitution == CleanSubstitution::sampled_token;
  const Vocab& vocab = view.model->vocab();
  const int length = view.model->length();
  TokenSequence z = TokenSequence::filled(length, vocab.mask_index, vocab);
  const VisibilitySpec vis = VisibilitySpec::bidirectional();
  std::vector<double> probs(static_cast<std::size_t>(vocab.size_k));
  std::vector<std::vector<int>> sets;
  int nfe = 0;

  for (int i = steps_t; i >= 1; --i) {
    if (z.mask_count() == 0) break;
    const double t = static_cast<double>(i) / steps_t;
    const double s = static_cast<double>(i - 1) / steps_t;
    const PosteriorParams params(schedule.at(s).alpha, schedule.at(t).alpha);
    const double denom = 1.0 - params.alpha_t;
    const double p_unmask = denom > 0.0 ? (params.alpha_s - params.alpha_t) / denom : 1.0;
    ++nfe;
    std::vector<int> decoded;
    for (int l = 0; l < length; ++l) {
      if (!vocab.is_mask(z[l])) continue;
      view.model->predict_row_into(z, l, t, vis, probs);
      if (hard_sample) {
        // Ablation: commit to a drawn clean token before the unmask decision.
        // Same law as the marginalized default for the masked family.
        const int x_hat = draw_clean_token(probs, vocab, rng, 1.0);
        if (rng.next_unit() < p_unmask) {
          z.set(l, x_hat);
          decoded.push_back(l);
        }
      } else if (rng.next_unit() < p_unmask) {
        z.set(l, draw_clean_token(probs, vocab, rng, 1.0));
        decoded.push_back(l);
      }
    }
    sets.push_back(std::move(decoded));
  }
  // Residual masks can only appear if the schedule does not reach alpha = 1
  // at s = 0 exactly; force-decode them from the t = 0 prediction.
  if (z.mask_count() > 0) {
    ++nfe;
    std::vector<int> decoded;
    for (int l = 0; l < length; ++l) {
      if (!vocab.is_mask(z[l])) continue;
      view.model->predict_row_into(z, l, 0.0, vis, probs);
      z.set(l, draw_clean_token(probs, vocab, rng, 1.0));
      decoded.push_back(l);
    }
    sets.push_back(std::move(decoded));
  }
  GenerationTrace trace{std::move(z), nfe, 0.0, std::move(sets)};
  trace.modeled_cost = modeled_cost(trace, static_cast<double>(view.model->parameter_count()),
                                    SamplerFamily::ancestral_masked, /*cache=*/false);
  return trace;
}

GenerationTrace ancestral_uniform(const DenoiserView& view, const NoiseSchedule& schedule,
                                  int steps_t, RngStream& rng, CleanSubstitution substitution) {
  const bool hard_sample = substitution != CleanSubstitution::marginal_distribution;
  const Vocab& vocab = view.model->vocab();
  const int length = view.model->length();
  const int k = vocab.size_k;
  std::vector<int> init(static_cast<std::size_t>(length));
  for (auto& tok : init) tok = rng.next_below(k);
  TokenSequence z(std::move(init), vocab);
  const VisibilitySpec vis = VisibilitySpec::bidirectional();
  CategoricalField field(length, k);
  std::vector<double> posterior(static_cast<std::size_t>(k));
  std::vector<double> hard_one_hot(static_cast<std::size_t>(k));
  std::vector<std::vector<int>> sets;
  int nfe = 0;

  for (int i = steps_t; i >= 1; --i) {
    const double t = static_cast<double>(i) / steps_t;
    const double s = static_cast<double>(i - 1) / steps_t;
    const PosteriorParams params(schedule.at(s).alpha, schedule.at(t).alpha);
    ++nfe;
    // One parallel denoiser evaluation per step; positions update from the
    // pre-step prediction, so later positions never see earlier updates.
    view.model->predict_into(z, t, vis, field);
    std::vector<int> changed;
    for (int l = 0; l < length; ++l) {
      std::span<const double> x_dist = field.row(l);
      if (hard_sample) {
        const int drawn = sample_categorical_unchecked(x_dist, rng);
        std::fill(hard_one_hot.begin(), hard_one_hot.end(), 0.0);
        hard_one_hot[static_cast<std::size_t>(drawn)] = 1.0;
        x_dist = hard_one_hot;
      }
      uniform_plugin_posterior_into(z[l], x_dist, params, k, posterior);
      const int next = sample_categorical_unchecked(posterior, rng);
      if (next != z[l]) changed.push_back(l);
      z.set(l, next);
    }
    sets.push_back(std::move(changed));
  }
  GenerationTrace trace{std::move(z), nfe, 0.0, std::move(sets)};
  trace.modeled_cost = modeled_cost(trace, static_cast<double>(view.model->parameter_count()),
                                    SamplerFamily::ancestral_uniform, /*cache=*/false);
  return trace;
}

}  // namespace

GenerationTrace sample_ancestral(const DenoiserView& view, KernelFamily family,
                                 const NoiseSchedule& schedule, int steps_t, RngStream& rng,
                                 CleanSubstitution substitution) {
  if (steps_t < 1) throw ConfigError("sample_ancestral: steps_T must be >= 1");
  return family == KernelFamily::masked
             ? ancestral_masked(view, schedule, steps_t, rng, substitution)
             : ancestral_uniform(view, schedule, steps_t, rng, substitution);
}

GenerationTrace sample_eso_block(const DenoiserView& view, int length, int block_spacing,
                                 RngStream& rng) {
  const Vocab& vocab = view.model->vocab();
  if (length != view.model->length()) {
    throw ConfigError("sample_eso_block: length must match the model context length");
  }
  if (block_spacing < 1 || length % block_spacing != 0) {
    throw ConfigError("sample_eso_block: block spacing L' must divide L");
  }
  const int parallel = length / block_spacing;  // tokens decoded per step

  // Decode order: step i handles {i, i + L', ..., i + (k-1)L'}. Within a
  // step, positions are computed from the same pre-step state (no intra-step
  // information flow), which is what makes the causal cost accounting valid.
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(length));
  for (int i = 0; i < block_spacing; ++i) {
    for (int j = 0; j < parallel; ++j) order.push_back(i + j * block_spacing);
  }
  const VisibilitySpec vis = VisibilitySpec::permuted(order);

  TokenSequence z = TokenSequence::filled(length, vocab.mask_index, vocab);
  std::vector<double> probs(static_cast<std::size_t>(vocab.size_k));
  std::vector<int> drawn(static_cast<std::size_t>(parallel));
  std::vector<std::vector<int>> sets;
  for (int i = 0; i < block_spacing; ++i) {
    std::vector<int> decoded(static_cast<std::size_t>(parallel));
    for (int j = 0; j < parallel; ++j) {
      const int pos = i + j * block_spacing;
      view.model->predict_row_into(z, pos, 0.0, vis, probs);
      drawn[static_cast<std::size_t>(j)] = draw_clean_token(probs, vocab, rng, 1.0);
      decoded[static_cast<std::size_t>(j)] = pos;
    }
    for (int j = 0; j < parallel; ++j) {
      z.set(decoded[static_cast<std::size_t>(j)], drawn[static_cast<std::size_t>(j)]);
    }
    sets.push_back(std::move(decoded));
  }
  GenerationTrace trace{std::move(z), block_spacing, 0.0, std::move(sets)};
  trace.modeled_cost = modeled_cost(trace, static_cast<double>(view.model->parameter_count()),
                                    SamplerFamily::eso_block, /*cache=*/true);
  return trace;
}

double modeled_cost(const GenerationTrace& trace, double params_n, SamplerFamily family,
                    bool cache) {
  const int length = trace.sample.length();
  if (!cache) {
    return 2.0 * params_n * static_cast<double>(trace.nfe) * length;
  }
  if (family == SamplerFamily::ancestral_masked || family == SamplerFamily::ancestral_uniform) {
    throw ConfigError("modeled_cost: bidirectional ancestral samplers cannot reuse a cache");
  }
  double newly_visible = 0.0;
  for (const auto& step : trace.per_step_unmask_sets) {
    newly_visible += static_cast<double>(step.size());
  }
  return 2.0 * params_n * newly_visible;
}

double modeled_throughput_tokens_per_gflop(const GenerationTrace& trace) {
  return static_cast<double>(trace.sample.length()) / (trace.modeled_cost / 1e9);
}

std::string trace_record_json(const GenerationTrace& trace) {
  nlohmann::json record;
  record["tokens"] = std::vector<int>(trace.sample.tokens().begin(), trace.sample.tokens().end());
  record["nfe"] = trace.nfe;
  record["modeled_cost"] = trace.modeled_cost;
  record["per_step_sets"] = trace.per_step_unmask_sets;
  return record.dump();
}

}  // namespace difflab
