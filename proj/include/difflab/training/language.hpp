#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "difflab/core/rng.hpp"
#include "difflab/core/vocab.hpp"

namespace difflab {

// A synthetic data source with exact likelihoods: every language can sample
// sequences, score any sequence exactly, and report the exact expected
// per-sequence negative log-probability. Small instances can enumerate their
// entire support, which is what the enumeration oracles and the Bayes-optimal
// denoiser builders rely on.
class SyntheticLanguage {
 public:
  virtual ~SyntheticLanguage() = default;

  virtual const Vocab& vocab() const = 0;
  virtual int length() const = 0;
  virtual TokenSequence sample(RngStream& rng) const = 0;
  // Exact log p(x); -infinity off support.
  virtual double log_prob(const TokenSequence& x) const = 0;
  // Exact E[-log p(x)] in nats over the whole language.
  virtual double exact_sequence_nats() const = 0;
  double entropy_rate() const { return exact_sequence_nats() / length(); }

  // Calls fn(tokens, probability) for every support sequence. Throws
  // ConfigError when the support exceeds `guard` sequences.
  virtual void enumerate_support(
      const std::function<void(const std::vector<int>&, double)>& fn,
      std::size_t guard = 10'000'000) const = 0;
};

// First-order Markov chain over the non-mask tokens. The initial distribution
// defaults to the stationary distribution of the transition matrix, which
// makes the per-token entropy rate position-independent.
class MarkovChainLanguage : public SyntheticLanguage {
 public:
  // transition[i][j] = P(next = state j | current = state i); states are the
  // first `num_states` non-mask token indices of the vocab.
  MarkovChainLanguage(const Vocab& vocab, int length, std::vector<std::vector<double>> transition,
                      std::vector<double> initial = {});

  static MarkovChainLanguage two_state(const Vocab& vocab, int length, double stay_probability);

  const Vocab& vocab() const override { return vocab_; }
  int length() const override { return length_; }
  TokenSequence sample(RngStream& rng) const override;
  double log_prob(const TokenSequence& x) const override;
  double exact_sequence_nats() const override;
  void enumerate_support(const std::function<void(const std::vector<int>&, double)>& fn,
                         std::size_t guard) const override;

  int num_states() const { return static_cast<int>(transition_.size()); }
  // Token index corresponding to a chain state (skips the mask index).
  int state_token(int state) const { return state_tokens_[static_cast<std::size_t>(state)]; }
  const std::vector<std::vector<double>>& transition() const { return transition_; }
  const std::vector<double>& initial() const { return initial_; }

 private:
  int token_state(int token) const;  // -1 when the token is not a chain state

  Vocab vocab_;
  int length_;
  std::vector<std::vector<double>> transition_;
  std::vector<double> initial_;
  std::vector<int> state_tokens_;
};

// Uniform distribution over balanced bracket strings of a fixed even length.
// Token 0 opens, token 1 closes; exact log-probability is -log Catalan(L/2).
class ParenthesisLanguage : public SyntheticLanguage {
 public:
  ParenthesisLanguage(const Vocab& vocab, int length);

  const Vocab& vocab() const override { return vocab_; }
  int length() const override { return length_; }
  TokenSequence sample(RngStream& rng) const override;
  double log_prob(const TokenSequence& x) const override;
  double exact_sequence_nats() const override;
  void enumerate_support(const std::function<void(const std::vector<int>&, double)>& fn,
                         std::size_t guard) const override;

 private:
  // completions_[pos][open_depth] = number of balanced completions.
  double completions(int pos, int depth) const;

  Vocab vocab_;
  int length_;
  std::vector<std::vector<double>> completions_;
};

// Mixture of per-position categorical templates: pick template i with weight
// w_i, then draw each position independently from that template's column
// distribution. Exact likelihood is the weighted sum of product likelihoods.
class TemplateLanguage : public SyntheticLanguage {
 public:
  struct Template {
    double weight;
    // columns[pos][token] over non-mask tokens; rows must each sum to 1.
    std::vector<std::vector<double>> columns;
  };

  TemplateLanguage(const Vocab& vocab, int length, std::vector<Template> templates);

  const Vocab& vocab() const override { return vocab_; }
  int length() const override { return length_; }
  TokenSequence sample(RngStream& rng) const override;
  double log_prob(const TokenSequence& x) const override;
  double exact_sequence_nats() const override;
  void enumerate_support(const std::function<void(const std::vector<int>&, double)>& fn,
                         std::size_t guard) const override;

 private:
  Vocab vocab_;
  int length_;
  std::vector<Template> templates_;
};

// Variable-length data option: with probability `random_length_fraction` an
// example is truncated to a length drawn uniformly from {1, ..., L}; the tail
// is filled with the mask token and every loss excludes it.
struct DataConfig {
  double random_length_fraction = 0.0;
};

struct Example {
  TokenSequence tokens;
  int effective_length;
};

Example draw_example(const SyntheticLanguage& language, const DataConfig& config, RngStream& rng);

}  // namespace difflab
