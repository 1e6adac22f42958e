#pragma once

#include <cstdint>
#include <vector>

#include "difflab/denoisers/denoiser.hpp"

namespace difflab {

struct MlpConfig {
  Vocab vocab;
  int length = 8;
  std::vector<int> hidden = {32, 32};
  // Sinusoidal time features sin((j+1) pi t), cos((j+1) pi t), ...
  int time_features = 4;
  bool time_conditioned = false;
  std::uint64_t init_seed = 1;
  double init_scale = 1.0;  // weights ~ N(0, init_scale^2 / fan_in)
};

// Per-position MLP denoiser. Each output row is one forward pass on the
// input vector
//   [ one-hot(z^0)*vis, ..., one-hot(z^{L-1})*vis, one-hot(row), time feats ]
// where invisible positions contribute all-zero blocks, so a row provably
// cannot depend on inputs outside its visibility set. Hidden layers use tanh;
// the K outputs go through a softmax.
class MlpDenoiser : public Denoiser {
 public:
  explicit MlpDenoiser(const MlpConfig& config);

  const Vocab& vocab() const override { return config_.vocab; }
  int length() const override { return config_.length; }
  bool time_conditioned() const override { return config_.time_conditioned; }
  std::size_t parameter_count() const override { return params_.size(); }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  void predict_row_into(const TokenSequence& z, int row, double t, const VisibilitySpec& vis,
                        std::span<double> out) const override;
  void accumulate_row_gradient(const TokenSequence& z, int row, double t,
                               const VisibilitySpec& vis, std::span<const double> grad_row,
                               std::span<double> grad) const override;

  // Exact forward cost of one row (= one predicted token):
  //   per layer: 2 * out * in (multiply-add) + out (bias add)
  //   plus out (tanh) per hidden layer and 3K for the output softmax.
  double forward_flops_per_token() const override;
  std::string architecture_name() const override { return "mlp"; }

  const MlpConfig& config() const { return config_; }
  int input_dim() const { return input_dim_; }

 private:
  struct Layer {
    std::size_t w_offset;
    std::size_t b_offset;
    int in;
    int out;
  };

  void build_input(const TokenSequence& z, int row, double t, std::uint64_t vis_bits,
                   std::vector<double>& input) const;
  // Runs the forward pass; activations[i] holds layer i's post-nonlinearity
  // output (the last entry holds softmax probabilities).
  void forward(const std::vector<double>& input, std::vector<std::vector<double>>& activations)
      const;

  MlpConfig config_;
  int input_dim_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

}  // namespace difflab
