#pragma once

#include <span>
#include <vector>

#include "difflab/processes/forward.hpp"

namespace difflab {

// Noise levels at the two ends of a reverse step s < t, plus the derived
// quantities the closed-form posteriors need.
struct PosteriorParams {
  double alpha_s;
  double alpha_t;

  PosteriorParams(double alpha_s, double alpha_t);

  double alpha_t_given_s() const { return alpha_t / alpha_s; }
  // kappa_t = (1 - alpha_t) / (K alpha_t + 1 - alpha_t)
  static double kappa(double alpha_t, int k);
};

// Masked-family reverse posterior q_{s|t}(. | z_t, x): a one-hot at z_t when
// z_t is not the mask, otherwise a two-point mixture between x and the mask.
// Degenerate input alpha_t = 1 with z_t = mask is rejected (NumericalError).
void masked_reverse_posterior_into(int z_t_token, int x_token, const PosteriorParams& params,
                                   const Vocab& vocab, std::span<double> out);
std::vector<double> masked_reverse_posterior(int z_t_token, int x_token,
                                             const PosteriorParams& params, const Vocab& vocab);

// Uniform-family closed-form reverse posterior. Requires alpha_t in (0, 1];
// a zero denominator K alpha_t <z,x> + 1 - alpha_t is rejected (NumericalError).
void uniform_reverse_posterior_into(int z_t_token, int x_token, const PosteriorParams& params,
                                    int k, std::span<double> out);
std::vector<double> uniform_reverse_posterior(int z_t_token, int x_token,
                                              const PosteriorParams& params, int k);

// Model-substituted variants where the clean one-hot is replaced by a full
// predicted distribution over clean tokens (the learned reverse transition).
void masked_plugin_posterior_into(int z_t_token, std::span<const double> x_dist,
                                  const PosteriorParams& params, const Vocab& vocab,
                                  std::span<double> out);
void uniform_plugin_posterior_into(int z_t_token, std::span<const double> x_dist,
                                   const PosteriorParams& params, int k, std::span<double> out);

// Independent verification oracle: computes q(z_s | z_t, x) by enumerating
// z_s over all K categories and applying Bayes' rule to the two-step
// factorization q_{t|s}(z_t|z_s) q_s(z_s|x) with the transition kernel
// Cat(alpha_{t|s} z_s + (1 - alpha_{t|s}) prior).
std::vector<double> bayes_posterior_oracle(KernelFamily family, const Vocab& vocab, int z_t_token,
                                           int x_token, double alpha_s, double alpha_t);

}  // namespace difflab
