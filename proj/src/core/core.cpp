#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "difflab/core/categorical.hpp"
#include "difflab/core/errors.hpp"
#include "difflab/core/rng.hpp"
#include "difflab/core/schedule.hpp"
#include "difflab/core/vocab.hpp"

namespace difflab {

double RngStream::next_gaussian() noexcept {
  if (has_gaussian_spare_) {
    has_gaussian_spare_ = false;
    return gaussian_spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - next_unit();
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  gaussian_spare_ = r * std::sin(theta);
  has_gaussian_spare_ = true;
  return r * std::cos(theta);
}

Vocab::Vocab(int size_k_in, int mask_index_in) : size_k(size_k_in), mask_index(mask_index_in) {
  if (size_k < 2) throw std::invalid_argument("Vocab: size_k must be >= 2");
  if (mask_index < 0 || mask_index >= size_k) {
    throw std::invalid_argument("Vocab: mask_index must lie in [0, size_k)");
  }
}

TokenSequence::TokenSequence(std::vector<int> tokens, const Vocab& vocab)
    : tokens_(std::move(tokens)), vocab_(vocab) {
  for (int tok : tokens_) {
    if (tok < 0 || tok >= vocab_.size_k) {
      throw std::invalid_argument("TokenSequence: token index " + std::to_string(tok) +
                                  " outside [0, " + std::to_string(vocab_.size_k) + ")");
    }
  }
}

TokenSequence TokenSequence::filled(int length, int token, const Vocab& vocab) {
  return TokenSequence(std::vector<int>(static_cast<std::size_t>(length), token), vocab);
}

void TokenSequence::set(int pos, int token) {
  if (token < 0 || token >= vocab_.size_k) {
    throw std::invalid_argument("TokenSequence::set: token outside vocabulary");
  }
  tokens_[static_cast<std::size_t>(pos)] = token;
}

bool TokenSequence::is_clean() const {
  for (int tok : tokens_) {
    if (vocab_.is_mask(tok)) return false;
  }
  return true;
}

int TokenSequence::mask_count() const {
  int n = 0;
  for (int tok : tokens_) n += vocab_.is_mask(tok) ? 1 : 0;
  return n;
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, double scale) : kind_(kind), scale_(scale) {
  if (!(scale >= 0.0 && scale <= 1.0)) {
    throw std::invalid_argument("NoiseSchedule: scale must lie in [0, 1]");
  }
}

AlphaValue NoiseSchedule::at(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error("NoiseSchedule: t outside [0, 1]");
  }
  switch (kind_) {
    case ScheduleKind::linear:
      return {scale_ * (1.0 - t), scale_ * -1.0};
    case ScheduleKind::cosine: {
      const double c = std::cos(0.5 * std::numbers::pi * t);
      return {scale_ * c * c, scale_ * -0.5 * std::numbers::pi * std::sin(std::numbers::pi * t)};
    }
  }
  throw std::logic_error("NoiseSchedule: unknown kind");
}

CategoricalField CategoricalField::from_rows(int length, int k, std::span<const double> rows) {
  if (static_cast<std::size_t>(length) * k != rows.size()) {
    throw std::invalid_argument("CategoricalField: size mismatch");
  }
  CategoricalField field(length, k);
  for (int l = 0; l < length; ++l) {
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      const double v = rows[static_cast<std::size_t>(l) * k + c];
      if (!(v >= 0.0)) {
        throw std::invalid_argument("CategoricalField: negative entry in row " + std::to_string(l));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("CategoricalField: row " + std::to_string(l) +
                                  " sums to " + std::to_string(sum));
    }
    auto out = field.row(l);
    for (int c = 0; c < k; ++c) out[c] = rows[static_cast<std::size_t>(l) * k + c] / sum;
  }
  return field;
}

int sample_categorical_unchecked(std::span<const double> probs, RngStream& rng) {
  const double u = rng.next_unit();
  double cum = 0.0;
  const int k = static_cast<int>(probs.size());
  for (int i = 0; i < k; ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  // Guard against accumulated rounding: return the last positive-mass index.
  for (int i = k - 1; i >= 0; --i) {
    if (probs[i] > 0.0) return i;
  }
  return k - 1;
}

int sample_categorical(std::span<const double> probs, RngStream& rng) {
  if (probs.empty()) throw std::invalid_argument("sample_categorical: empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("sample_categorical: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("sample_categorical: probabilities sum to " + std::to_string(sum));
  }
  return sample_categorical_unchecked(probs, rng);
}

}  // namespace difflab
