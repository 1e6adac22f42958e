#include <algorithm>
#include <stdexcept>

#include "difflab/core/errors.hpp"
#include "difflab/denoisers/visibility.hpp"

namespace difflab {

VisibilitySpec VisibilitySpec::permuted(std::vector<int> order) {
  return {VisMode::permuted_causal, std::move(order)};
}

std::vector<std::uint64_t> visibility_masks(const VisibilitySpec& spec, int length) {
  if (length <= 0 || length > 64) {
    throw ConfigError("visibility_masks: length must lie in [1, 64]");
  }
  const std::uint64_t all =
      length == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << length) - 1;
  std::vector<std::uint64_t> masks(static_cast<std::size_t>(length), 0);
  switch (spec.mode) {
    case VisMode::bidirectional:
      std::fill(masks.begin(), masks.end(), all);
      return masks;
    case VisMode::causal:
      for (int row = 0; row < length; ++row) {
        masks[static_cast<std::size_t>(row)] = (std::uint64_t{1} << row) - 1;
      }
      return masks;
    case VisMode::permuted_causal: {
      if (static_cast<int>(spec.order.size()) != length) {
        throw ConfigError("permuted_causal requires a length-L permutation");
      }
      std::vector<int> rank(static_cast<std::size_t>(length), -1);
      for (int i = 0; i < length; ++i) {
        const int pos = spec.order[static_cast<std::size_t>(i)];
        if (pos < 0 || pos >= length || rank[static_cast<std::size_t>(pos)] != -1) {
          throw ConfigError("permuted_causal order must be a bijection on positions");
        }
        rank[static_cast<std::size_t>(pos)] = i;
      }
      std::uint64_t seen = 0;
      for (int i = 0; i < length; ++i) {
        const int pos = spec.order[static_cast<std::size_t>(i)];
        masks[static_cast<std::size_t>(pos)] = seen;
        seen |= std::uint64_t{1} << pos;
      }
      return masks;
    }
  }
  throw std::logic_error("visibility_masks: unknown mode");
}

namespace {

void shuffle_positions(std::vector<int>& positions, RngStream& rng) {
  for (int i = static_cast<int>(positions.size()) - 1; i > 0; --i) {
    const int j = rng.next_below(i + 1);
    std::swap(positions[static_cast<std::size_t>(i)], positions[static_cast<std::size_t>(j)]);
  }
}

std::vector<int> clean_first_order(const TokenSequence& z, RngStream* rng) {
  std::vector<int> clean;
  std::vector<int> masked;
  for (int pos = 0; pos < z.length(); ++pos) {
    (z.vocab().is_mask(z[pos]) ? masked : clean).push_back(pos);
  }
  if (rng != nullptr) {
    shuffle_positions(clean, *rng);
    shuffle_positions(masked, *rng);
  }
  clean.insert(clean.end(), masked.begin(), masked.end());
  return clean;
}

}  // namespace

VisibilitySpec clean_first_visibility(const TokenSequence& z, RngStream& rng) {
  return VisibilitySpec::permuted(clean_first_order(z, &rng));
}

VisibilitySpec clean_first_visibility_canonical(const TokenSequence& z) {
  return VisibilitySpec::permuted(clean_first_order(z, nullptr));
}

}  // namespace difflab
