#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "difflab/core/errors.hpp"
#include "difflab/denoisers/tabular.hpp"

namespace difflab {

namespace {

std::vector<double> uniform_bucket_midpoints(int buckets) {
  if (buckets < 1) throw ConfigError("TabularDenoiser: time_buckets must be >= 1");
  std::vector<double> times(static_cast<std::size_t>(buckets));
  for (int b = 0; b < buckets; ++b) {
    times[static_cast<std::size_t>(b)] = (b + 0.5) / buckets;
  }
  return times;
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : logits) max = std::max(max, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
}

}  // namespace

TabularDenoiser::TabularDenoiser(const Vocab& vocab, int length, int time_buckets,
                                 TabularScope scope, bool time_conditioned,
                                 std::size_t entry_guard)
    : TabularDenoiser(vocab, length, uniform_bucket_midpoints(time_buckets), scope,
                      time_conditioned, entry_guard) {}

TabularDenoiser::TabularDenoiser(const Vocab& vocab, int length, std::vector<double> t_grid,
                                 TabularScope scope, bool time_conditioned,
                                 std::size_t entry_guard)
    : vocab_(vocab),
      length_(length),
      scope_(scope),
      time_conditioned_(time_conditioned),
      bucket_times_(std::move(t_grid)) {
  if (length_ <= 0 || length_ > 32) {
    throw ConfigError("TabularDenoiser: length must lie in [1, 32]");
  }
  if (bucket_times_.empty() || !std::is_sorted(bucket_times_.begin(), bucket_times_.end())) {
    throw ConfigError("TabularDenoiser: bucket times must be non-empty and sorted");
  }
  if (!time_conditioned_ && bucket_times_.size() != 1) {
    throw ConfigError("TabularDenoiser: time-unconditioned tables need exactly one bucket");
  }
  init_layout(entry_guard);
}

void TabularDenoiser::init_layout(std::size_t entry_guard) {
  const auto k = static_cast<std::uint64_t>(vocab_.size_k);
  pow_k_.resize(static_cast<std::size_t>(length_) + 1);
  pow_k_[0] = 1;
  for (int j = 0; j < length_; ++j) {
    if (pow_k_[static_cast<std::size_t>(j)] > entry_guard * 16) {
      throw ConfigError("TabularDenoiser: K^L overflows the state-space guard");
    }
    pow_k_[static_cast<std::size_t>(j) + 1] = pow_k_[static_cast<std::size_t>(j)] * k;
  }
  pow_k_l_ = pow_k_[static_cast<std::size_t>(length_)];

  switch (scope_) {
    case TabularScope::bidirectional:
      rows_per_bucket_ = static_cast<std::size_t>(pow_k_l_) * length_;
      break;
    case TabularScope::causal_prefix: {
      prefix_row_base_.resize(static_cast<std::size_t>(length_));
      std::size_t total = 0;
      for (int row = 0; row < length_; ++row) {
        prefix_row_base_[static_cast<std::size_t>(row)] = total;
        total += static_cast<std::size_t>(pow_k_[static_cast<std::size_t>(row)]);
      }
      rows_per_bucket_ = total;
      break;
    }
    case TabularScope::visibility_subsets: {
      // Enumerate (row, visible subset of the other positions plus optionally
      // the row itself, token assignment). Assignments are keyed sparsely.
      std::size_t total = 0;
      subset_index_.reserve(1024);
      for (int row = 0; row < length_; ++row) {
        const auto limit = std::uint64_t{1} << length_;
        for (std::uint64_t bits = 0; bits < limit; ++bits) {
          // Count assignments for this subset.
          int visible = 0;
          for (int j = 0; j < length_; ++j) visible += (bits >> j) & 1u ? 1 : 0;
          const std::uint64_t assignments = pow_k_[static_cast<std::size_t>(visible)];
          total += assignments;
          if (total > entry_guard) {
            throw ConfigError("TabularDenoiser: state-space guard exceeded");
          }
        }
      }
      rows_per_bucket_ = total;
      break;
    }
  }
  const std::size_t entries = rows_per_bucket_ * bucket_times_.size();
  if (entries == 0 || entries > entry_guard) {
    throw ConfigError("TabularDenoiser: state-space guard exceeded (" + std::to_string(entries) +
                      " entries)");
  }
  params_.assign(entries * static_cast<std::size_t>(vocab_.size_k), 0.0);
  if (scope_ == TabularScope::visibility_subsets) {
    // Assign offsets by iterating assignments in a canonical order.
    std::size_t offset = 0;
    for (int row = 0; row < length_; ++row) {
      const auto limit = std::uint64_t{1} << length_;
      for (std::uint64_t bits = 0; bits < limit; ++bits) {
        std::vector<int> positions;
        for (int j = 0; j < length_; ++j) {
          if ((bits >> j) & 1u) positions.push_back(j);
        }
        const std::uint64_t assignments = pow_k_[positions.size()];
        for (std::uint64_t a = 0; a < assignments; ++a) {
          std::uint64_t enc = 0;
          std::uint64_t rest = a;
          for (int pos : positions) {
            enc += (rest % static_cast<std::uint64_t>(vocab_.size_k)) *
                   pow_k_[static_cast<std::size_t>(pos)];
            rest /= static_cast<std::uint64_t>(vocab_.size_k);
          }
          const std::uint64_t key =
              ((static_cast<std::uint64_t>(row) << length_) | bits) * pow_k_l_ + enc;
          subset_index_.emplace(key, offset++);
        }
      }
    }
  }
}

int TabularDenoiser::bucket_of(double t) const {
  const double query = time_conditioned_ ? t : bucket_times_[0];
  const auto it = std::lower_bound(bucket_times_.begin(), bucket_times_.end(), query);
  if (it == bucket_times_.begin()) return 0;
  if (it == bucket_times_.end()) return static_cast<int>(bucket_times_.size()) - 1;
  const auto hi = static_cast<int>(it - bucket_times_.begin());
  return (query - bucket_times_[static_cast<std::size_t>(hi) - 1] <=
          bucket_times_[static_cast<std::size_t>(hi)] - query)
             ? hi - 1
             : hi;
}

std::uint64_t TabularDenoiser::full_visibility_bits(int row) const {
  (void)row;
  return length_ == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << length_) - 1;
}

std::size_t TabularDenoiser::row_offset(int row, int bucket, std::uint64_t vis_bits,
                                        std::uint64_t token_enc) const {
  std::size_t within = 0;
  switch (scope_) {
    case TabularScope::bidirectional: {
      if (vis_bits != full_visibility_bits(row)) {
        throw ConfigError("TabularDenoiser(bidirectional): lookup with partial visibility");
      }
      within = static_cast<std::size_t>(token_enc) * length_ + static_cast<std::size_t>(row);
      break;
    }
    case TabularScope::causal_prefix: {
      const std::uint64_t expect = (std::uint64_t{1} << row) - 1;
      if (vis_bits != expect) {
        throw ConfigError("TabularDenoiser(causal_prefix): lookup with non-prefix visibility");
      }
      within = prefix_row_base_[static_cast<std::size_t>(row)] + static_cast<std::size_t>(token_enc);
      break;
    }
    case TabularScope::visibility_subsets: {
      const std::uint64_t key =
          ((static_cast<std::uint64_t>(row) << length_) | vis_bits) * pow_k_l_ + token_enc;
      const auto it = subset_index_.find(key);
      if (it == subset_index_.end()) {
        throw ConfigError("TabularDenoiser(subsets): missing context key");
      }
      within = it->second;
      break;
    }
  }
  return (static_cast<std::size_t>(bucket) * rows_per_bucket_ + within) *
         static_cast<std::size_t>(vocab_.size_k);
}

std::size_t TabularDenoiser::locate(const TokenSequence& z, int row, double t,
                                    const VisibilitySpec& vis) const {
  if (z.length() != length_) throw ConfigError("TabularDenoiser: sequence length mismatch");
  std::uint64_t bits = 0;
  if (vis.mode == VisMode::bidirectional) {
    bits = full_visibility_bits(row);
  } else {
    bits = visibility_masks(vis, length_)[static_cast<std::size_t>(row)];
  }
  std::uint64_t enc = 0;
  for (int j = 0; j < length_; ++j) {
    if ((bits >> j) & 1u) {
      enc += static_cast<std::uint64_t>(z[j]) * pow_k_[static_cast<std::size_t>(j)];
    }
  }
  return row_offset(row, bucket_of(t), bits, enc);
}

void TabularDenoiser::predict_row_into(const TokenSequence& z, int row, double t,
                                       const VisibilitySpec& vis, std::span<double> out) const {
  const std::size_t offset = locate(z, row, t, vis);
  const std::span<const double> values{params_.data() + offset,
                                       static_cast<std::size_t>(vocab_.size_k)};
  if (stores_probs_) {
    std::copy(values.begin(), values.end(), out.begin());
  } else {
    softmax_into(values, out);
  }
}

void TabularDenoiser::accumulate_row_gradient(const TokenSequence& z, int row, double t,
                                              const VisibilitySpec& vis,
                                              std::span<const double> grad_row,
                                              std::span<double> grad) const {
  if (stores_probs_) {
    throw ConfigError("TabularDenoiser: gradient through a frozen table");
  }
  const std::size_t offset = locate(z, row, t, vis);
  const int k = vocab_.size_k;
  double probs[64];
  softmax_into({params_.data() + offset, static_cast<std::size_t>(k)},
               {probs, static_cast<std::size_t>(k)});
  double inner = 0.0;
  for (int c = 0; c < k; ++c) inner += probs[c] * grad_row[static_cast<std::size_t>(c)];
  for (int c = 0; c < k; ++c) {
    grad[offset + static_cast<std::size_t>(c)] +=
        probs[c] * (grad_row[static_cast<std::size_t>(c)] - inner);
  }
}

std::span<double> TabularDenoiser::row_values(const TokenSequence& z, int row, double t,
                                              const VisibilitySpec& vis) {
  const std::size_t offset = locate(z, row, t, vis);
  return {params_.data() + offset, static_cast<std::size_t>(vocab_.size_k)};
}

void TabularDenoiser::set_row(const TokenSequence& z, int row, double t,
                              const VisibilitySpec& vis, std::span<const double> values) {
  auto dst = row_values(z, row, t, vis);
  std::copy(values.begin(), values.end(), dst.begin());
}

void TabularDenoiser::set_row_raw(int row, int bucket, std::uint64_t vis_bits,
                                  std::uint64_t token_enc, std::span<const double> values) {
  const std::size_t offset = row_offset(row, bucket, vis_bits, token_enc);
  std::copy(values.begin(), values.end(), params_.begin() + static_cast<std::ptrdiff_t>(offset));
}

namespace {

// Accumulates, for one evidence key, the posterior over x^row for every row.
// weights[x_index] = p(x) * prod_j q(z_j | x_j) over visible positions.
void fill_rows_from_weights(const std::vector<std::vector<int>>& support,
                            const std::vector<double>& weights, int k, int length,
                            std::vector<double>& rows_out) {
  rows_out.assign(static_cast<std::size_t>(length) * k, 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < support.size(); ++s) {
    const double w = weights[s];
    if (w <= 0.0) continue;
    total += w;
    for (int l = 0; l < length; ++l) {
      rows_out[static_cast<std::size_t>(l) * k + support[s][static_cast<std::size_t>(l)]] += w;
    }
  }
  if (total <= 0.0) {
    // Unreachable evidence under the kernel/language; store uniform rows.
    std::fill(rows_out.begin(), rows_out.end(), 1.0 / k);
    return;
  }
  for (auto& v : rows_out) v /= total;
}

}  // namespace

std::unique_ptr<TabularDenoiser> optimal_tabular_denoiser(const SyntheticLanguage& language,
                                                          const ForwardKernel& kernel,
                                                          std::vector<double> t_grid,
                                                          TabularScope scope) {
  const Vocab vocab = language.vocab();
  const int length = language.length();
  const int k = vocab.size_k;
  const bool time_conditioned = t_grid.size() > 1;
  auto table = std::make_unique<TabularDenoiser>(vocab, length, std::move(t_grid), scope,
                                                 time_conditioned);

  std::vector<std::vector<int>> support;
  std::vector<double> prior;
  language.enumerate_support([&](const std::vector<int>& tokens, double p) {
    support.push_back(tokens);
    prior.push_back(p);
  });

  std::vector<double> weights(support.size());
  std::vector<double> rows;
  std::vector<double> likelihood(static_cast<std::size_t>(k) * k);  // [x_token][z_token]
  const auto& times = table->bucket_times();

  for (int b = 0; b < static_cast<int>(times.size()); ++b) {
    const double alpha = kernel.schedule.at(times[static_cast<std::size_t>(b)]).alpha;
    for (int x_tok = 0; x_tok < k; ++x_tok) {
      interpolation_marginal_into(kernel.family, vocab, x_tok, alpha,
                                  {likelihood.data() + static_cast<std::size_t>(x_tok) * k,
                                   static_cast<std::size_t>(k)});
    }
    auto evidence_weights = [&](std::uint64_t bits, const std::vector<int>& z_tokens) {
      for (std::size_t s = 0; s < support.size(); ++s) {
        double w = prior[s];
        for (int j = 0; j < length && w > 0.0; ++j) {
          if ((bits >> j) & 1u) {
            w *= likelihood[static_cast<std::size_t>(support[s][static_cast<std::size_t>(j)]) * k +
                            z_tokens[static_cast<std::size_t>(j)]];
          }
        }
        weights[s] = w;
      }
    };

    if (scope == TabularScope::bidirectional) {
      const std::uint64_t states = [&] {
        std::uint64_t v = 1;
        for (int j = 0; j < length; ++j) v *= static_cast<std::uint64_t>(k);
        return v;
      }();
      std::vector<int> z_tokens(static_cast<std::size_t>(length));
      const std::uint64_t bits = table->full_visibility_bits(0);
      for (std::uint64_t enc = 0; enc < states; ++enc) {
        std::uint64_t rest = enc;
        for (int j = 0; j < length; ++j) {
          z_tokens[static_cast<std::size_t>(j)] = static_cast<int>(rest % k);
          rest /= static_cast<std::uint64_t>(k);
        }
        evidence_weights(bits, z_tokens);
        fill_rows_from_weights(support, weights, k, length, rows);
        for (int row = 0; row < length; ++row) {
          table->set_row_raw(row, b, bits, enc,
                             {rows.data() + static_cast<std::size_t>(row) * k,
                              static_cast<std::size_t>(k)});
        }
      }
    } else if (scope == TabularScope::visibility_subsets) {
      std::vector<int> z_tokens(static_cast<std::size_t>(length), 0);
      const std::uint64_t limit = std::uint64_t{1} << length;
      for (std::uint64_t bits = 0; bits < limit; ++bits) {
        std::vector<int> positions;
        for (int j = 0; j < length; ++j) {
          if ((bits >> j) & 1u) positions.push_back(j);
        }
        std::uint64_t assignments = 1;
        for (std::size_t i = 0; i < positions.size(); ++i) {
          assignments *= static_cast<std::uint64_t>(k);
        }
        for (std::uint64_t a = 0; a < assignments; ++a) {
          std::uint64_t enc = 0;
          std::uint64_t rest = a;
          std::fill(z_tokens.begin(), z_tokens.end(), 0);
          for (int pos : positions) {
            const int tok = static_cast<int>(rest % k);
            rest /= static_cast<std::uint64_t>(k);
            z_tokens[static_cast<std::size_t>(pos)] = tok;
            enc += static_cast<std::uint64_t>(tok) *
                   [&] {
                     std::uint64_t p = 1;
                     for (int j = 0; j < pos; ++j) p *= static_cast<std::uint64_t>(k);
                     return p;
                   }();
          }
          evidence_weights(bits, z_tokens);
          fill_rows_from_weights(support, weights, k, length, rows);
          for (int row = 0; row < length; ++row) {
            table->set_row_raw(row, b, bits, enc,
                               {rows.data() + static_cast<std::size_t>(row) * k,
                                static_cast<std::size_t>(k)});
          }
        }
      }
    } else {
      throw ConfigError("optimal_tabular_denoiser: unsupported scope");
    }
  }
  table->freeze_as_probabilities();
  return table;
}

std::unique_ptr<TabularDenoiser> optimal_ar_tabular(const SyntheticLanguage& language) {
  const Vocab vocab = language.vocab();
  const int length = language.length();
  const int k = vocab.size_k;
  auto table = std::make_unique<TabularDenoiser>(vocab, length, 1, TabularScope::causal_prefix,
                                                 /*time_conditioned=*/false);

  // Accumulate conditional counts in one pass over the support: for every
  // prefix of every support sequence, add p(x) to count[prefix][next token].
  std::vector<std::uint64_t> pow_k(static_cast<std::size_t>(length) + 1, 1);
  for (int j = 0; j < length; ++j) pow_k[static_cast<std::size_t>(j) + 1] = pow_k[static_cast<std::size_t>(j)] * k;
  std::vector<std::unordered_map<std::uint64_t, std::vector<double>>> counts(
      static_cast<std::size_t>(length));
  language.enumerate_support([&](const std::vector<int>& tokens, double p) {
    std::uint64_t enc = 0;
    for (int l = 0; l < length; ++l) {
      auto& cell = counts[static_cast<std::size_t>(l)][enc];
      if (cell.empty()) cell.assign(static_cast<std::size_t>(k), 0.0);
      cell[static_cast<std::size_t>(tokens[static_cast<std::size_t>(l)])] += p;
      enc += static_cast<std::uint64_t>(tokens[static_cast<std::size_t>(l)]) *
             pow_k[static_cast<std::size_t>(l)];
    }
  });

  std::vector<double> uniform(static_cast<std::size_t>(k), 1.0 / k);
  for (int row = 0; row < length; ++row) {
    const std::uint64_t bits = (std::uint64_t{1} << row) - 1;
    for (std::uint64_t enc = 0; enc < pow_k[static_cast<std::size_t>(row)]; ++enc) {
      const auto it = counts[static_cast<std::size_t>(row)].find(enc);
      if (it == counts[static_cast<std::size_t>(row)].end()) {
        table->set_row_raw(row, 0, bits, enc, uniform);
        continue;
      }
      double total = 0.0;
      for (double v : it->second) total += v;
      std::vector<double> probs(it->second);
      for (auto& v : probs) v /= total;
      table->set_row_raw(row, 0, bits, enc, probs);
    }
  }
  table->freeze_as_probabilities();
  return table;
}

}  // namespace difflab
