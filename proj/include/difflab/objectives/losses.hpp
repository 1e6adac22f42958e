#pragma once

#include <vector>

#include "difflab/core/schedule.hpp"
#include "difflab/denoisers/denoiser.hpp"
#include "difflab/processes/forward.hpp"

namespace difflab {

// One Monte Carlo evaluation of a diffusion objective: the per-sequence loss
// in nats for a single (t, z_t) draw, with its per-position decomposition.
struct LossSample {
  double value;
  std::vector<double> per_position;
  double t_draw;
  TokenSequence z_t;
};

// Expected fraction of tokens generated by the parallel (diffusion) component
// of the interpolating model; the remainder is unmasked sequentially.
struct EsoConfig {
  double alpha_0 = 1.0;
};

// Reading of the inner normalizer sum in the uniform-state token-level loss.
// The printed index runs over L but only the vocabulary reading reproduces
// the discrete-time ELBO; `vocabulary` is the oracle-validated default.
enum class DuoSumReading { vocabulary, sequence };

// Exact AR negative log-likelihood -sum_l log p(x^l | x^{<l}) under causal
// visibility with the time input at zero. Returns +infinity (never NaN) when
// the model assigns zero probability to an observed token.
double ar_nll(const DenoiserView& view, const TokenSequence& x);

// Single-draw masked-diffusion NELBO: corrupts x at time t, then weights the
// masked-position cross entropy by alpha'_t / (1 - alpha_t). Raises a weight
// singularity error at alpha_t = 1 (t = 0).
LossSample mdlm_nelbo_sample(const DenoiserView& view, const NoiseSchedule& schedule,
                             const TokenSequence& x, double t, RngStream& rng);

// Training-only variant with the weight replaced by -1; identical draws,
// no singularity. Never reported as a likelihood bound.
LossSample mdlm_low_variance_loss(const DenoiserView& view, const NoiseSchedule& schedule,
                                  const TokenSequence& x, double t, RngStream& rng);

// Single-draw uniform-state NELBO evaluated termwise per position. Requires a
// time-conditioned model and kappa_t in (0, 1).
LossSample duo_nelbo_sample(const DenoiserView& view, const NoiseSchedule& schedule,
                            const TokenSequence& x, double t, RngStream& rng,
                            DuoSumReading reading = DuoSumReading::vocabulary);

// Deterministic-in-z variant of the uniform-state loss: the expectation over
// z_t is taken exactly per position (enumerating the K latent values), so
// only t remains Monte Carlo. Used by evaluators and oracles.
double duo_nelbo_exact_z(const DenoiserView& view, const NoiseSchedule& schedule,
                         const TokenSequence& x, double t,
                         DuoSumReading reading = DuoSumReading::vocabulary);

// Single-draw interpolating bound: sequential term over the masked positions
// of z_0 ~ q_0(.|x) at alpha_0 (left context re-cleaned), plus the masked
// diffusion term under the alpha_0-scaled schedule. z_0 draws come from
// rng.split(1) and diffusion draws from rng.split(2), so the alpha_0 in {0,1}
// reduction identities are exact on shared streams.
LossSample esolm_nelbo_sample(const DenoiserView& view, const NoiseSchedule& base_schedule,
                              const TokenSequence& x, const EsoConfig& config, double t,
                              RngStream& rng);

}  // namespace difflab
