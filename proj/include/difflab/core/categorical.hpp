#pragma once

#include <span>
#include <vector>

#include "difflab/core/rng.hpp"

namespace difflab {

// Per-position probability vectors: an L x K row-major matrix where each row
// is a distribution over the K categories.
class CategoricalField {
 public:
  CategoricalField(int length, int k)
      : length_(length), k_(k), data_(static_cast<std::size_t>(length) * k, 0.0) {}

  // Validating constructor: rejects rows whose sum deviates from 1 by more
  // than 1e-9 or with negative entries, then renormalizes so stored rows sum
  // to 1 within 1e-12.
  static CategoricalField from_rows(int length, int k, std::span<const double> rows);

  int length() const { return length_; }
  int k() const { return k_; }
  std::span<double> row(int l) { return {data_.data() + static_cast<std::size_t>(l) * k_, static_cast<std::size_t>(k_)}; }
  std::span<const double> row(int l) const { return {data_.data() + static_cast<std::size_t>(l) * k_, static_cast<std::size_t>(k_)}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  void fill(double v) { data_.assign(data_.size(), v); }

 private:
  int length_;
  int k_;
  std::vector<double> data_;
};

// Draws an index with probability probs[i]. The input must be non-negative
// and sum to 1 within 1e-9 (validation error otherwise). All arithmetic is
// IEEE double; consumes exactly one uniform draw.
int sample_categorical(std::span<const double> probs, RngStream& rng);

// Hot-path variant without validation; callers guarantee a valid simplex row.
int sample_categorical_unchecked(std::span<const double> probs, RngStream& rng);

}  // namespace difflab
