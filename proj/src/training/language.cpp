#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "difflab/core/categorical.hpp"
#include "difflab/core/errors.hpp"
#include "difflab/training/language.hpp"

namespace difflab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& transition) {
  // Power iteration; the chains used here are small and ergodic.
  const std::size_t n = transition.size();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n, 0.0);
  for (int iter = 0; iter < 20000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * transition[i][j];
    }
    double diff = 0.0;
    for (std::size_t j = 0; j < n; ++j) diff += std::abs(next[j] - pi[j]);
    pi.swap(next);
    if (diff < 1e-15) break;
  }
  return pi;
}

void validate_rows(const std::vector<std::vector<double>>& rows, std::size_t width,
                   const char* what) {
  for (const auto& row : rows) {
    if (row.size() != width) throw ConfigError(std::string(what) + ": ragged row");
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw ConfigError(std::string(what) + ": negative probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError(std::string(what) + ": row does not sum to 1");
    }
  }
}

}  // namespace

MarkovChainLanguage::MarkovChainLanguage(const Vocab& vocab, int length,
                                         std::vector<std::vector<double>> transition,
                                         std::vector<double> initial)
    : vocab_(vocab), length_(length), transition_(std::move(transition)), initial_(std::move(initial)) {
  const auto n = transition_.size();
  if (n < 2) throw ConfigError("MarkovChainLanguage: need at least two states");
  if (static_cast<int>(n) > vocab_.size_k - 1) {
    throw ConfigError("MarkovChainLanguage: more states than non-mask tokens");
  }
  validate_rows(transition_, n, "MarkovChainLanguage transition");
  if (initial_.empty()) {
    initial_ = stationary_distribution(transition_);
  } else if (initial_.size() != n) {
    throw ConfigError("MarkovChainLanguage: initial distribution size mismatch");
  }
  for (int tok = 0; tok < vocab_.size_k && static_cast<int>(state_tokens_.size()) < static_cast<int>(n); ++tok) {
    if (!vocab_.is_mask(tok)) state_tokens_.push_back(tok);
  }
}

MarkovChainLanguage MarkovChainLanguage::two_state(const Vocab& vocab, int length,
                                                   double stay_probability) {
  std::vector<std::vector<double>> transition = {
      {stay_probability, 1.0 - stay_probability},
      {1.0 - stay_probability, stay_probability},
  };
  return MarkovChainLanguage(vocab, length, std::move(transition));
}

int MarkovChainLanguage::token_state(int token) const {
  for (std::size_t s = 0; s < state_tokens_.size(); ++s) {
    if (state_tokens_[s] == token) return static_cast<int>(s);
  }
  return -1;
}

TokenSequence MarkovChainLanguage::sample(RngStream& rng) const {
  std::vector<int> tokens(static_cast<std::size_t>(length_));
  int state = sample_categorical_unchecked(initial_, rng);
  tokens[0] = state_tokens_[static_cast<std::size_t>(state)];
  for (int l = 1; l < length_; ++l) {
    state = sample_categorical_unchecked(transition_[static_cast<std::size_t>(state)], rng);
    tokens[static_cast<std::size_t>(l)] = state_tokens_[static_cast<std::size_t>(state)];
  }
  return TokenSequence(std::move(tokens), vocab_);
}

double MarkovChainLanguage::log_prob(const TokenSequence& x) const {
  if (x.length() != length_) throw std::invalid_argument("log_prob: length mismatch");
  int state = token_state(x[0]);
  if (state < 0) return kNegInf;
  double lp = initial_[static_cast<std::size_t>(state)] > 0.0
                  ? std::log(initial_[static_cast<std::size_t>(state)])
                  : kNegInf;
  for (int l = 1; l < length_; ++l) {
    const int next = token_state(x[l]);
    if (next < 0) return kNegInf;
    const double p = transition_[static_cast<std::size_t>(state)][static_cast<std::size_t>(next)];
    lp += p > 0.0 ? std::log(p) : kNegInf;
    state = next;
  }
  return lp;
}

double MarkovChainLanguage::exact_sequence_nats() const {
  // H(X_0) + sum_l H(X_l | X_{l-1}) with marginals propagated exactly.
  const std::size_t n = transition_.size();
  auto entropy = [](const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) {
      if (v > 0.0) h -= v * std::log(v);
    }
    return h;
  };
  std::vector<double> marginal = initial_;
  double total = entropy(marginal);
  std::vector<double> next(n, 0.0);
  for (int l = 1; l < length_; ++l) {
    double cond = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cond += marginal[i] * entropy(transition_[i]);
    }
    total += cond;
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) next[j] += marginal[i] * transition_[i][j];
    }
    marginal = next;
  }
  return total;
}

void MarkovChainLanguage::enumerate_support(
    const std::function<void(const std::vector<int>&, double)>& fn, std::size_t guard) const {
  const std::size_t n = transition_.size();
  double count = std::pow(static_cast<double>(n), length_);
  if (count > static_cast<double>(guard)) {
    throw ConfigError("MarkovChainLanguage: support exceeds enumeration guard");
  }
  std::vector<int> states(static_cast<std::size_t>(length_), 0);
  std::vector<int> tokens(static_cast<std::size_t>(length_));
  while (true) {
    double p = initial_[static_cast<std::size_t>(states[0])];
    for (int l = 1; l < length_ && p > 0.0; ++l) {
      p *= transition_[static_cast<std::size_t>(states[static_cast<std::size_t>(l) - 1])]
                      [static_cast<std::size_t>(states[static_cast<std::size_t>(l)])];
    }
    if (p > 0.0) {
      for (int l = 0; l < length_; ++l) {
        tokens[static_cast<std::size_t>(l)] = state_tokens_[static_cast<std::size_t>(states[static_cast<std::size_t>(l)])];
      }
      fn(tokens, p);
    }
    int l = length_ - 1;
    while (l >= 0 && states[static_cast<std::size_t>(l)] == static_cast<int>(n) - 1) {
      states[static_cast<std::size_t>(l)] = 0;
      --l;
    }
    if (l < 0) break;
    ++states[static_cast<std::size_t>(l)];
  }
}

ParenthesisLanguage::ParenthesisLanguage(const Vocab& vocab, int length)
    : vocab_(vocab), length_(length) {
  if (length_ < 2 || length_ % 2 != 0) {
    throw ConfigError("ParenthesisLanguage: length must be even and >= 2");
  }
  if (vocab_.size_k < 3 || vocab_.mask_index == 0 || vocab_.mask_index == 1) {
    throw ConfigError("ParenthesisLanguage: tokens 0/1 must be non-mask (need K >= 3)");
  }
  // completions_[pos][depth] = number of ways to finish a balanced string.
  completions_.assign(static_cast<std::size_t>(length_) + 1,
                      std::vector<double>(static_cast<std::size_t>(length_) + 2, 0.0));
  completions_[static_cast<std::size_t>(length_)][0] = 1.0;
  for (int pos = length_ - 1; pos >= 0; --pos) {
    for (int depth = 0; depth <= length_; ++depth) {
      double ways = 0.0;
      if (depth + 1 <= length_) ways += completions_[static_cast<std::size_t>(pos) + 1][static_cast<std::size_t>(depth) + 1];
      if (depth > 0) ways += completions_[static_cast<std::size_t>(pos) + 1][static_cast<std::size_t>(depth) - 1];
      completions_[static_cast<std::size_t>(pos)][static_cast<std::size_t>(depth)] = ways;
    }
  }
}

double ParenthesisLanguage::completions(int pos, int depth) const {
  if (depth < 0 || depth > length_) return 0.0;
  return completions_[static_cast<std::size_t>(pos)][static_cast<std::size_t>(depth)];
}

TokenSequence ParenthesisLanguage::sample(RngStream& rng) const {
  std::vector<int> tokens(static_cast<std::size_t>(length_));
  int depth = 0;
  for (int pos = 0; pos < length_; ++pos) {
    const double open_ways = completions(pos + 1, depth + 1);
    const double close_ways = depth > 0 ? completions(pos + 1, depth - 1) : 0.0;
    const double p_open = open_ways / (open_ways + close_ways);
    if (rng.next_unit() < p_open) {
      tokens[static_cast<std::size_t>(pos)] = 0;
      ++depth;
    } else {
      tokens[static_cast<std::size_t>(pos)] = 1;
      --depth;
    }
  }
  return TokenSequence(std::move(tokens), vocab_);
}

double ParenthesisLanguage::log_prob(const TokenSequence& x) const {
  if (x.length() != length_) throw std::invalid_argument("log_prob: length mismatch");
  int depth = 0;
  for (int pos = 0; pos < length_; ++pos) {
    if (x[pos] == 0) {
      ++depth;
    } else if (x[pos] == 1) {
      --depth;
    } else {
      return kNegInf;
    }
    if (depth < 0) return kNegInf;
  }
  if (depth != 0) return kNegInf;
  return -std::log(completions(0, 0));
}

double ParenthesisLanguage::exact_sequence_nats() const { return std::log(completions(0, 0)); }

void ParenthesisLanguage::enumerate_support(
    const std::function<void(const std::vector<int>&, double)>& fn, std::size_t guard) const {
  const double total = completions(0, 0);
  if (total > static_cast<double>(guard)) {
    throw ConfigError("ParenthesisLanguage: support exceeds enumeration guard");
  }
  const double p = 1.0 / total;
  std::vector<int> tokens(static_cast<std::size_t>(length_), 0);
  auto recurse = [&](auto&& self, int pos, int depth) -> void {
    if (pos == length_) {
      if (depth == 0) fn(tokens, p);
      return;
    }
    if (completions(pos + 1, depth + 1) > 0.0) {
      tokens[static_cast<std::size_t>(pos)] = 0;
      self(self, pos + 1, depth + 1);
    }
    if (depth > 0 && completions(pos + 1, depth - 1) > 0.0) {
      tokens[static_cast<std::size_t>(pos)] = 1;
      self(self, pos + 1, depth - 1);
    }
  };
  recurse(recurse, 0, 0);
}

TemplateLanguage::TemplateLanguage(const Vocab& vocab, int length, std::vector<Template> templates)
    : vocab_(vocab), length_(length), templates_(std::move(templates)) {
  if (templates_.empty()) throw ConfigError("TemplateLanguage: need at least one template");
  double total_weight = 0.0;
  for (const auto& tpl : templates_) {
    if (static_cast<int>(tpl.columns.size()) != length_) {
      throw ConfigError("TemplateLanguage: template length mismatch");
    }
    validate_rows(tpl.columns, static_cast<std::size_t>(vocab_.size_k), "TemplateLanguage column");
    for (const auto& col : tpl.columns) {
      if (col[static_cast<std::size_t>(vocab_.mask_index)] != 0.0) {
        throw ConfigError("TemplateLanguage: clean data cannot place mass on the mask token");
      }
    }
    if (!(tpl.weight > 0.0)) throw ConfigError("TemplateLanguage: weights must be positive");
    total_weight += tpl.weight;
  }
  for (auto& tpl : templates_) tpl.weight /= total_weight;
}

TokenSequence TemplateLanguage::sample(RngStream& rng) const {
  std::vector<double> weights;
  weights.reserve(templates_.size());
  for (const auto& tpl : templates_) weights.push_back(tpl.weight);
  const int which = sample_categorical_unchecked(weights, rng);
  const auto& tpl = templates_[static_cast<std::size_t>(which)];
  std::vector<int> tokens(static_cast<std::size_t>(length_));
  for (int l = 0; l < length_; ++l) {
    tokens[static_cast<std::size_t>(l)] =
        sample_categorical_unchecked(tpl.columns[static_cast<std::size_t>(l)], rng);
  }
  return TokenSequence(std::move(tokens), vocab_);
}

double TemplateLanguage::log_prob(const TokenSequence& x) const {
  if (x.length() != length_) throw std::invalid_argument("log_prob: length mismatch");
  double p = 0.0;
  for (const auto& tpl : templates_) {
    double lik = tpl.weight;
    for (int l = 0; l < length_ && lik > 0.0; ++l) {
      lik *= tpl.columns[static_cast<std::size_t>(l)][static_cast<std::size_t>(x[l])];
    }
    p += lik;
  }
  return p > 0.0 ? std::log(p) : kNegInf;
}

double TemplateLanguage::exact_sequence_nats() const {
  double nats = 0.0;
  enumerate_support(
      [&](const std::vector<int>& tokens, double p) {
        nats -= p * log_prob(TokenSequence(tokens, vocab_));
      },
      10'000'000);
  return nats;
}

void TemplateLanguage::enumerate_support(
    const std::function<void(const std::vector<int>&, double)>& fn, std::size_t guard) const {
  double count = std::pow(static_cast<double>(vocab_.size_k), length_);
  if (count > static_cast<double>(guard)) {
    throw ConfigError("TemplateLanguage: support exceeds enumeration guard");
  }
  std::vector<int> tokens(static_cast<std::size_t>(length_), 0);
  auto recurse = [&](auto&& self, int pos) -> void {
    if (pos == length_) {
      const double lp = log_prob(TokenSequence(tokens, vocab_));
      if (lp != kNegInf) fn(tokens, std::exp(lp));
      return;
    }
    for (int tok = 0; tok < vocab_.size_k; ++tok) {
      if (vocab_.is_mask(tok)) continue;
      tokens[static_cast<std::size_t>(pos)] = tok;
      self(self, pos + 1);
    }
    tokens[static_cast<std::size_t>(pos)] = 0;
  };
  recurse(recurse, 0);
}

Example draw_example(const SyntheticLanguage& language, const DataConfig& config, RngStream& rng) {
  TokenSequence tokens = language.sample(rng);
  int effective = tokens.length();
  if (config.random_length_fraction > 0.0 &&
      rng.next_unit() < config.random_length_fraction) {
    effective = 1 + rng.next_below(tokens.length());
    for (int l = effective; l < tokens.length(); ++l) {
      tokens.set(l, language.vocab().mask_index);
    }
  }
  return {std::move(tokens), effective};
}

}  // namespace difflab
