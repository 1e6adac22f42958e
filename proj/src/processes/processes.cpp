#include <cmath>
#include <stdexcept>
#include <string>

#include "difflab/core/errors.hpp"
#include "difflab/processes/forward.hpp"
#include "difflab/processes/posterior.hpp"

namespace difflab {

void interpolation_marginal_into(KernelFamily family, const Vocab& vocab, int token,
                                 double alpha, std::span<double> out) {
  const int k = vocab.size_k;
  if (family == KernelFamily::masked) {
    for (int c = 0; c < k; ++c) out[c] = 0.0;
    out[token] += alpha;
    out[vocab.mask_index] += 1.0 - alpha;
  } else {
    const double spread = (1.0 - alpha) / k;
    for (int c = 0; c < k; ++c) out[c] = spread;
    out[token] += alpha;
  }
}

std::vector<double> forward_marginal(const ForwardKernel& kernel, const Vocab& vocab,
                                     int x_token, double t) {
  if (x_token < 0 || x_token >= vocab.size_k) {
    throw std::invalid_argument("forward_marginal: token outside vocabulary");
  }
  if (vocab.is_mask(x_token)) {
    throw std::invalid_argument("forward_marginal: clean token must not be the mask index");
  }
  std::vector<double> out(static_cast<std::size_t>(vocab.size_k));
  interpolation_marginal_into(kernel.family, vocab, x_token, kernel.schedule.at(t).alpha, out);
  return out;
}

int corrupt_token(KernelFamily family, const Vocab& vocab, int token, double alpha,
                  RngStream& rng) {
  if (family == KernelFamily::masked) {
    return rng.next_unit() < alpha ? token : vocab.mask_index;
  }
  // uniform: keep with probability alpha, otherwise draw a category uniformly
  // (the uniform prior includes the clean token itself).
  if (rng.next_unit() < alpha) return token;
  return rng.next_below(vocab.size_k);
}

TokenSequence corrupt_sequence(const ForwardKernel& kernel, const TokenSequence& x, double t,
                               RngStream& rng) {
  if (!x.is_clean()) {
    throw std::invalid_argument("corrupt_sequence: input sequence must be clean");
  }
  const double alpha = kernel.schedule.at(t).alpha;
  std::vector<int> out(static_cast<std::size_t>(x.length()));
  for (int l = 0; l < x.length(); ++l) {
    out[static_cast<std::size_t>(l)] = corrupt_token(kernel.family, x.vocab(), x[l], alpha, rng);
  }
  return TokenSequence(std::move(out), x.vocab());
}

PosteriorParams::PosteriorParams(double alpha_s_in, double alpha_t_in)
    : alpha_s(alpha_s_in), alpha_t(alpha_t_in) {
  if (!(alpha_s >= 0.0 && alpha_s <= 1.0) || !(alpha_t >= 0.0 && alpha_t <= 1.0)) {
    throw std::invalid_argument("PosteriorParams: alpha values must lie in [0, 1]");
  }
  if (alpha_s < alpha_t) {
    throw std::invalid_argument("PosteriorParams: requires alpha_s >= alpha_t");
  }
}

double PosteriorParams::kappa(double alpha_t, int k) {
  return (1.0 - alpha_t) / (k * alpha_t + 1.0 - alpha_t);
}

void masked_reverse_posterior_into(int z_t_token, int x_token, const PosteriorParams& params,
                                   const Vocab& vocab, std::span<double> out) {
  for (auto& v : out) v = 0.0;
  if (!vocab.is_mask(z_t_token)) {
    out[z_t_token] = 1.0;
    return;
  }
  const double denom = 1.0 - params.alpha_t;
  if (denom == 0.0) {
    throw NumericalError("masked_reverse_posterior: degenerate input alpha_t = 1 with z_t = mask");
  }
  out[x_token] += (params.alpha_s - params.alpha_t) / denom;
  out[vocab.mask_index] += (1.0 - params.alpha_s) / denom;
}

std::vector<double> masked_reverse_posterior(int z_t_token, int x_token,
                                             const PosteriorParams& params, const Vocab& vocab) {
  std::vector<double> out(static_cast<std::size_t>(vocab.size_k));
  masked_reverse_posterior_into(z_t_token, x_token, params, vocab, out);
  return out;
}

void uniform_reverse_posterior_into(int z_t_token, int x_token, const PosteriorParams& params,
                                    int k, std::span<double> out) {
  const double a_t = params.alpha_t;
  const double a_s = params.alpha_s;
  const double a_ts = params.alpha_t_given_s();
  const double dot = z_t_token == x_token ? 1.0 : 0.0;
  const double denom = k * a_t * dot + 1.0 - a_t;
  if (denom == 0.0) {
    throw NumericalError("uniform_reverse_posterior: zero denominator (alpha_t = 1, z_t != x)");
  }
  const double spread = (1.0 - a_ts) * (1.0 - a_s) / k;
  for (auto& v : out) v = spread;
  out[z_t_token] += k * a_t * dot + (a_ts - a_t);
  out[x_token] += a_s - a_t;
  for (auto& v : out) v /= denom;
}

std::vector<double> uniform_reverse_posterior(int z_t_token, int x_token,
                                              const PosteriorParams& params, int k) {
  std::vector<double> out(static_cast<std::size_t>(k));
  uniform_reverse_posterior_into(z_t_token, x_token, params, k, out);
  return out;
}

void masked_plugin_posterior_into(int z_t_token, std::span<const double> x_dist,
                                  const PosteriorParams& params, const Vocab& vocab,
                                  std::span<double> out) {
  for (auto& v : out) v = 0.0;
  if (!vocab.is_mask(z_t_token)) {
    out[z_t_token] = 1.0;
    return;
  }
  const double denom = 1.0 - params.alpha_t;
  if (denom == 0.0) {
    throw NumericalError("masked_plugin_posterior: degenerate input alpha_t = 1 with z_t = mask");
  }
  const double unmask = (params.alpha_s - params.alpha_t) / denom;
  const int k = static_cast<int>(x_dist.size());
  for (int c = 0; c < k; ++c) out[c] = unmask * x_dist[c];
  out[vocab.mask_index] += (1.0 - params.alpha_s) / denom;
}

void uniform_plugin_posterior_into(int z_t_token, std::span<const double> x_dist,
                                   const PosteriorParams& params, int k, std::span<double> out) {
  const double a_t = params.alpha_t;
  const double a_s = params.alpha_s;
  const double a_ts = params.alpha_t_given_s();
  const double denom = k * a_t * x_dist[z_t_token] + 1.0 - a_t;
  if (denom <= 0.0) {
    throw NumericalError("uniform_plugin_posterior: non-positive denominator");
  }
  const double spread = (1.0 - a_ts) * (1.0 - a_s) / k;
  for (int c = 0; c < k; ++c) out[c] = spread + (a_s - a_t) * x_dist[c];
  out[z_t_token] += k * a_t * x_dist[z_t_token] + (a_ts - a_t);
  for (auto& v : out) v /= denom;
}

std::vector<double> bayes_posterior_oracle(KernelFamily family, const Vocab& vocab, int z_t_token,
                                           int x_token, double alpha_s, double alpha_t) {
  const PosteriorParams params(alpha_s, alpha_t);
  const int k = vocab.size_k;
  const double a_ts = params.alpha_t_given_s();
  std::vector<double> transition(static_cast<std::size_t>(k));
  std::vector<double> marginal_s(static_cast<std::size_t>(k));
  std::vector<double> weights(static_cast<std::size_t>(k));
  interpolation_marginal_into(family, vocab, x_token, alpha_s, marginal_s);
  double total = 0.0;
  for (int z_s = 0; z_s < k; ++z_s) {
    interpolation_marginal_into(family, vocab, z_s, a_ts, transition);
    weights[static_cast<std::size_t>(z_s)] =
        transition[static_cast<std::size_t>(z_t_token)] * marginal_s[static_cast<std::size_t>(z_s)];
    total += weights[static_cast<std::size_t>(z_s)];
  }
  if (total <= 0.0) {
    throw NumericalError("bayes_posterior_oracle: z_t unreachable from x at these noise levels");
  }
  for (auto& w : weights) w /= total;
  return weights;
}

}  // namespace difflab
