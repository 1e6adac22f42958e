#pragma once

#include <span>
#include <vector>

namespace difflab {

// Category set of size K with one distinguished absorbing (mask) index.
struct Vocab {
  int size_k = 2;
  int mask_index = 1;

  Vocab() = default;
  Vocab(int size_k, int mask_index);

  bool is_mask(int token) const { return token == mask_index; }
  bool operator==(const Vocab&) const = default;
};

// Length-L sequence of category indices. "Clean" sequences (data) contain no
// mask tokens; latent sequences produced by corruption may.
class TokenSequence {
 public:
  TokenSequence(std::vector<int> tokens, const Vocab& vocab);
  static TokenSequence filled(int length, int token, const Vocab& vocab);

  int length() const { return static_cast<int>(tokens_.size()); }
  int operator[](int pos) const { return tokens_[static_cast<std::size_t>(pos)]; }
  void set(int pos, int token);
  std::span<const int> tokens() const { return tokens_; }
  const Vocab& vocab() const { return vocab_; }
  bool is_clean() const;
  int mask_count() const;
  bool operator==(const TokenSequence&) const = default;

 private:
  std::vector<int> tokens_;
  Vocab vocab_;
};

}  // namespace difflab
