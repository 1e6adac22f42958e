#pragma once

#include <memory>
#include <span>
#include <string>

#include "difflab/core/categorical.hpp"
#include "difflab/core/vocab.hpp"
#include "difflab/denoisers/visibility.hpp"

namespace difflab {

// Pluggable clean-token predictor x_theta: (z_t, t, visibility) -> per-position
// distributions over the vocabulary, with analytic parameter gradients.
//
// predict* is read-only and thread-safe; parameter mutation is single-writer.
// Models that are not time-conditioned ignore t (equivalent to feeding 0).
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual const Vocab& vocab() const = 0;
  virtual int length() const = 0;
  virtual bool time_conditioned() const = 0;

  virtual std::size_t parameter_count() const = 0;
  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  // Fills out (size K) with the row's predicted clean-token distribution.
  virtual void predict_row_into(const TokenSequence& z, int row, double t,
                                const VisibilitySpec& vis, std::span<double> out) const = 0;

  // Accumulates d(loss)/d(parameters) into grad for one row, given
  // d(loss)/d(row probabilities).
  virtual void accumulate_row_gradient(const TokenSequence& z, int row, double t,
                                       const VisibilitySpec& vis,
                                       std::span<const double> grad_row,
                                       std::span<double> grad) const = 0;

  // Exact forward multiply-accumulate cost per predicted token, for FLOP
  // accounting. Architectures without a defined count return a negative value.
  virtual double forward_flops_per_token() const = 0;

  virtual std::string architecture_name() const = 0;

  void predict_into(const TokenSequence& z, double t, const VisibilitySpec& vis,
                    CategoricalField& out) const;
  CategoricalField predict(const TokenSequence& z, double t, const VisibilitySpec& vis) const;
};

// A denoiser bound to the attention pattern its objective drives it with:
// bidirectional for the masked/uniform diffusion losses, causal for the AR
// factorization, permuted_causal for the interpolating model.
struct DenoiserView {
  const Denoiser* model = nullptr;
  VisMode vis_mode = VisMode::bidirectional;
};

}  // namespace difflab
