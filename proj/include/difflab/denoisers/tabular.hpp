#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "difflab/denoisers/denoiser.hpp"
#include "difflab/processes/forward.hpp"
#include "difflab/training/language.hpp"

namespace difflab {

// Which context keys a tabular model materializes. Lookups outside the
// declared scope fail loudly rather than default silently.
enum class TabularScope {
  bidirectional,       // key: full sequence (every position visible)
  causal_prefix,       // key: strict prefix z^{<row}
  visibility_subsets,  // key: any visible-position subset plus its tokens
};

// Exact, enumerable stand-in for x_theta: a table from
// (visible context, position, time bucket) to K logits (or frozen
// probabilities for Bayes-optimal tables). Guarded so the materialized state
// space stays enumerable.
class TabularDenoiser : public Denoiser {
 public:
  // Trainable table, uniform-initialized (all-zero logits). Time buckets are
  // uniform cells over [0,1] represented by their midpoints.
  TabularDenoiser(const Vocab& vocab, int length, int time_buckets, TabularScope scope,
                  bool time_conditioned, std::size_t entry_guard = 10'000'000);
  // Same, with explicit bucket representatives (a t grid). predict maps t to
  // the nearest representative, so evaluations at grid times are exact.
  TabularDenoiser(const Vocab& vocab, int length, std::vector<double> t_grid, TabularScope scope,
                  bool time_conditioned, std::size_t entry_guard = 10'000'000);

  const Vocab& vocab() const override { return vocab_; }
  int length() const override { return length_; }
  bool time_conditioned() const override { return time_conditioned_; }
  std::size_t parameter_count() const override { return params_.size(); }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  void predict_row_into(const TokenSequence& z, int row, double t, const VisibilitySpec& vis,
                        std::span<double> out) const override;
  void accumulate_row_gradient(const TokenSequence& z, int row, double t,
                               const VisibilitySpec& vis, std::span<const double> grad_row,
                               std::span<double> grad) const override;
  // Nominal per-row cost convention for the table backend: softmax only.
  double forward_flops_per_token() const override { return 3.0 * vocab_.size_k; }
  std::string architecture_name() const override { return "tabular"; }

  TabularScope scope() const { return scope_; }
  int time_buckets() const { return static_cast<int>(bucket_times_.size()); }
  const std::vector<double>& bucket_times() const { return bucket_times_; }
  int bucket_of(double t) const;

  // Direct row access for model builders and oracles. set_row stores logits
  // for trainable tables and probabilities for frozen ones.
  std::span<double> row_values(const TokenSequence& z, int row, double t,
                               const VisibilitySpec& vis);
  void set_row(const TokenSequence& z, int row, double t, const VisibilitySpec& vis,
               std::span<const double> values);

  // Raw keyed access used by enumeration builders: vis_bits is the visible
  // bitmask for the row, token_enc = sum of z[j] * K^j over visible j.
  std::size_t row_offset(int row, int bucket, std::uint64_t vis_bits,
                         std::uint64_t token_enc) const;
  void set_row_raw(int row, int bucket, std::uint64_t vis_bits, std::uint64_t token_enc,
                   std::span<const double> values);

  // Freeze the table to store probabilities verbatim (Bayes-optimal tables);
  // gradient accumulation is rejected once frozen.
  void freeze_as_probabilities() { stores_probs_ = true; }
  bool frozen() const { return stores_probs_; }

  std::uint64_t full_visibility_bits(int row) const;

 private:
  void init_layout(std::size_t entry_guard);
  std::size_t locate(const TokenSequence& z, int row, double t, const VisibilitySpec& vis) const;

  Vocab vocab_;
  int length_;
  TabularScope scope_;
  bool time_conditioned_;
  bool stores_probs_ = false;
  std::vector<double> bucket_times_;
  std::vector<double> params_;

  // Layout helpers.
  std::uint64_t pow_k_l_ = 1;                 // K^L
  std::vector<std::uint64_t> pow_k_;          // K^j
  std::vector<std::size_t> prefix_row_base_;  // causal_prefix: sum_{r<row} K^r
  std::size_t rows_per_bucket_ = 0;
  std::unordered_map<std::uint64_t, std::size_t> subset_index_;  // visibility_subsets
};

// Bayes-optimal denoiser by enumeration: entry (z, row, t) equals the exact
// posterior q(x^row | visible evidence) under the language prior and the
// forward kernel. The returned table is frozen (stores probabilities).
std::unique_ptr<TabularDenoiser> optimal_tabular_denoiser(const SyntheticLanguage& language,
                                                          const ForwardKernel& kernel,
                                                          std::vector<double> t_grid,
                                                          TabularScope scope =
                                                              TabularScope::bidirectional);

// Exact next-token conditionals of the language in a causal-prefix table
// (the "true model" for AR evaluation and sampling).
std::unique_ptr<TabularDenoiser> optimal_ar_tabular(const SyntheticLanguage& language);

}  // namespace difflab
