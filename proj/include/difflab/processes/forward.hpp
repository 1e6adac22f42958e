#pragma once

#include <span>
#include <vector>

#include "difflab/core/categorical.hpp"
#include "difflab/core/rng.hpp"
#include "difflab/core/schedule.hpp"
#include "difflab/core/vocab.hpp"

namespace difflab {

// The two interpolating corruption families: the prior is the mask one-hot
// for `masked` and the uniform distribution over all K categories for
// `uniform`. Corruption factorizes independently over positions.
enum class KernelFamily { masked, uniform };

struct ForwardKernel {
  KernelFamily family;
  NoiseSchedule schedule;
};

// Single-token interpolation marginal Cat(alpha e_token + (1 - alpha) prior),
// valid for both data->latent marginals and latent->latent transitions.
void interpolation_marginal_into(KernelFamily family, const Vocab& vocab, int token,
                                 double alpha, std::span<double> out);

// Marginal q_t(. | x_token) at time t. Clean data precondition: x_token must
// not be the mask index.
std::vector<double> forward_marginal(const ForwardKernel& kernel, const Vocab& vocab,
                                     int x_token, double t);

// One draw from the interpolation marginal. Consumes one uniform for the
// keep/corrupt decision plus, for the uniform family, one for the category.
int corrupt_token(KernelFamily family, const Vocab& vocab, int token, double alpha,
                  RngStream& rng);

// Independently corrupts every position of a clean sequence at time t.
TokenSequence corrupt_sequence(const ForwardKernel& kernel, const TokenSequence& x, double t,
                               RngStream& rng);

}  // namespace difflab
