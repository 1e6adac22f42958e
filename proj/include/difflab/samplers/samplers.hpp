#pragma once

#include <string>
#include <vector>

#include "difflab/denoisers/denoiser.hpp"
#include "difflab/processes/posterior.hpp"

namespace difflab {

enum class SamplerFamily { ar, ancestral_masked, ancestral_uniform, eso_block };

const char* sampler_family_name(SamplerFamily family);
SamplerFamily parse_sampler_family(const std::string& name);

// One generated sample with its step/NFE accounting. modeled_cost is the
// analytic FLOP estimate under the family's natural caching mode (cached for
// ar and eso_block, uncached for the bidirectional ancestral samplers).
// per_step_unmask_sets records which positions were decoded (masked families)
// or changed (uniform family) at each denoiser evaluation.
struct GenerationTrace {
  TokenSequence sample;
  int nfe;
  double modeled_cost;
  std::vector<std::vector<int>> per_step_unmask_sets;
};

// Sequential decoding with causal visibility; temperature 0 takes the argmax.
GenerationTrace sample_ar(const DenoiserView& view, int length, RngStream& rng,
                          double temperature = 1.0);

// How the unknown clean token is substituted into the reverse posterior.
//   marginal_distribution: plug in the full predicted distribution. For the
//     masked family this equals the exact mixture over clean tokens (the
//     posterior is linear in x) and is the family default.
//   sampled_token: plug in one drawn token per position. For the uniform
//     family this is the family default: the posterior is nonlinear in x, so
//     only the draw reproduces the exact posterior mixture (and recovers the
//     data law with a Bayes-optimal denoiser as T grows).
enum class CleanSubstitution { family_default, marginal_distribution, sampled_token };

// Reverse-time ancestral sampler on the descending grid t_i = i/T.
// Masked family: unmasked tokens never change and residual masks at t = 0 are
// force-decoded. Uniform family: every position may be revised at every step.
GenerationTrace sample_ancestral(const DenoiserView& view, KernelFamily family,
                                 const NoiseSchedule& schedule, int steps_t, RngStream& rng,
                                 CleanSubstitution substitution = CleanSubstitution::family_default);

// Interpolating-model block sampler: denoising step i in {0..L'-1} decodes
// positions {i, i+L', ..., i+(k-1)L'}, k = L/L', in parallel under causal
// visibility (one denoiser invocation per step, NFE = L').
GenerationTrace sample_eso_block(const DenoiserView& view, int length, int block_spacing,
                                 RngStream& rng);

// Analytic cost model. Uncached: every evaluation recomputes all L positions
// (2 N L per step). Cached: only newly visible positions cost compute; valid
// for the causal families (ar, eso_block) whose attention is causal.
double modeled_cost(const GenerationTrace& trace, double params_n, SamplerFamily family,
                    bool cache);

// Tokens generated per 1e9 modeled FLOPs; the deterministic stand-in for
// wall-clock throughput.
double modeled_throughput_tokens_per_gflop(const GenerationTrace& trace);

// Line-delimited trace export record (JSON).
std::string trace_record_json(const GenerationTrace& trace);

}  // namespace difflab
