#pragma once

#include <cstdint>
#include <vector>

#include "difflab/core/rng.hpp"
#include "difflab/core/vocab.hpp"

namespace difflab {

enum class VisMode { bidirectional, causal, permuted_causal };

// Attention-pattern contract: which input positions may influence each
// output row.
//
//   bidirectional:   every position (including the row itself).
//   causal:          strictly earlier positions j < row.
//   permuted_causal: positions strictly earlier in `order` than the row.
//                    order[i] is the position at decode rank i; identity
//                    order reproduces causal exactly.
struct VisibilitySpec {
  VisMode mode = VisMode::bidirectional;
  std::vector<int> order;  // permuted_causal only

  static VisibilitySpec bidirectional() { return {VisMode::bidirectional, {}}; }
  static VisibilitySpec causal() { return {VisMode::causal, {}}; }
  static VisibilitySpec permuted(std::vector<int> order);
};

// visible_masks(spec, L)[row] has bit j set iff input position j may
// influence output row `row`. Validates the permutation (bijection on
// [0, L)) for permuted_causal; lengths above 64 are rejected.
std::vector<std::uint64_t> visibility_masks(const VisibilitySpec& spec, int length);

// Training order for the interpolating model: positions holding clean tokens
// in z first, then masked positions, each subset independently shuffled.
VisibilitySpec clean_first_visibility(const TokenSequence& z, RngStream& rng);

// Deterministic variant used by the sequential phase of the interpolating
// bound: clean positions ascending, then masked positions ascending, so a
// masked row sees every clean token plus the masked positions to its left.
VisibilitySpec clean_first_visibility_canonical(const TokenSequence& z);

}  // namespace difflab
