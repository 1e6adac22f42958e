#include <cmath>
#include <numbers>

#include "difflab/core/errors.hpp"
#include "difflab/core/rng.hpp"
#include "difflab/denoisers/mlp.hpp"

namespace difflab {

MlpDenoiser::MlpDenoiser(const MlpConfig& config) : config_(config) {
  const int k = config_.vocab.size_k;
  const int length = config_.length;
  if (length <= 0 || length > 64) throw ConfigError("MlpDenoiser: length must lie in [1, 64]");
  if (config_.hidden.empty()) throw ConfigError("MlpDenoiser: need at least one hidden layer");
  input_dim_ = length * k + length + config_.time_features;

  std::size_t offset = 0;
  int in = input_dim_;
  auto add_layer = [&](int out) {
    layers_.push_back({offset, offset + static_cast<std::size_t>(out) * in, in, out});
    offset += static_cast<std::size_t>(out) * in + static_cast<std::size_t>(out);
    in = out;
  };
  for (int width : config_.hidden) {
    if (width <= 0) throw ConfigError("MlpDenoiser: hidden widths must be positive");
    add_layer(width);
  }
  add_layer(k);
  params_.assign(offset, 0.0);

  RngStream rng(config_.init_seed);
  for (const Layer& layer : layers_) {
    const double std_dev = config_.init_scale / std::sqrt(static_cast<double>(layer.in));
    for (std::size_t i = 0; i < static_cast<std::size_t>(layer.out) * layer.in; ++i) {
      params_[layer.w_offset + i] = std_dev * rng.next_gaussian();
    }
  }
}

void MlpDenoiser::build_input(const TokenSequence& z, int row, double t, std::uint64_t vis_bits,
                              std::vector<double>& input) const {
  const int k = config_.vocab.size_k;
  const int length = config_.length;
  input.assign(static_cast<std::size_t>(input_dim_), 0.0);
  for (int j = 0; j < length; ++j) {
    if ((vis_bits >> j) & 1u) {
      input[static_cast<std::size_t>(j) * k + z[j]] = 1.0;
    }
  }
  input[static_cast<std::size_t>(length) * k + row] = 1.0;
  const double t_in = config_.time_conditioned ? t : 0.0;
  for (int f = 0; f < config_.time_features; ++f) {
    const double arg = (f / 2 + 1) * std::numbers::pi * t_in;
    input[static_cast<std::size_t>(length) * k + length + f] =
        (f % 2 == 0) ? std::sin(arg) : std::cos(arg);
  }
}

void MlpDenoiser::forward(const std::vector<double>& input,
                          std::vector<std::vector<double>>& activations) const {
  activations.resize(layers_.size());
  const std::vector<double>* cur = &input;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& layer = layers_[li];
    auto& out = activations[li];
    out.assign(static_cast<std::size_t>(layer.out), 0.0);
    const double* w = params_.data() + layer.w_offset;
    const double* b = params_.data() + layer.b_offset;
    for (int r = 0; r < layer.out; ++r) {
      double acc = b[r];
      const double* wr = w + static_cast<std::size_t>(r) * layer.in;
      for (int c = 0; c < layer.in; ++c) acc += wr[c] * (*cur)[static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(r)] = acc;
    }
    if (li + 1 < layers_.size()) {
      for (auto& v : out) v = std::tanh(v);
    } else {
      double max = out[0];
      for (double v : out) max = std::max(max, v);
      double sum = 0.0;
      for (auto& v : out) {
        v = std::exp(v - max);
        sum += v;
      }
      for (auto& v : out) v /= sum;
    }
    cur = &out;
  }
}

void MlpDenoiser::predict_row_into(const TokenSequence& z, int row, double t,
                                   const VisibilitySpec& vis, std::span<double> out) const {
  thread_local std::vector<double> input;
  thread_local std::vector<std::vector<double>> activations;
  const std::uint64_t bits = visibility_masks(vis, config_.length)[static_cast<std::size_t>(row)];
  build_input(z, row, t, bits, input);
  forward(input, activations);
  const auto& probs = activations.back();
  for (std::size_t c = 0; c < probs.size(); ++c) out[c] = probs[c];
}

void MlpDenoiser::accumulate_row_gradient(const TokenSequence& z, int row, double t,
                                          const VisibilitySpec& vis,
                                          std::span<const double> grad_row,
                                          std::span<double> grad) const {
  thread_local std::vector<double> input;
  thread_local std::vector<std::vector<double>> activations;
  thread_local std::vector<double> delta;
  thread_local std::vector<double> delta_prev;

  const std::uint64_t bits = visibility_masks(vis, config_.length)[static_cast<std::size_t>(row)];
  build_input(z, row, t, bits, input);
  forward(input, activations);

  // Output layer: d(loss)/d(logits) through the softmax.
  const auto& probs = activations.back();
  const int k = config_.vocab.size_k;
  delta.assign(static_cast<std::size_t>(k), 0.0);
  double inner = 0.0;
  for (int c = 0; c < k; ++c) inner += probs[static_cast<std::size_t>(c)] * grad_row[static_cast<std::size_t>(c)];
  for (int c = 0; c < k; ++c) {
    delta[static_cast<std::size_t>(c)] =
        probs[static_cast<std::size_t>(c)] * (grad_row[static_cast<std::size_t>(c)] - inner);
  }

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& layer = layers_[li];
    const std::vector<double>& below = li == 0 ? input : activations[li - 1];
    double* gw = grad.data() + layer.w_offset;
    double* gb = grad.data() + layer.b_offset;
    for (int r = 0; r < layer.out; ++r) {
      const double d = delta[static_cast<std::size_t>(r)];
      if (d == 0.0) continue;
      gb[r] += d;
      double* gwr = gw + static_cast<std::size_t>(r) * layer.in;
      for (int c = 0; c < layer.in; ++c) gwr[c] += d * below[static_cast<std::size_t>(c)];
    }
    if (li == 0) break;
    // Propagate to the layer below: delta_prev = W^T delta, times tanh'.
    delta_prev.assign(static_cast<std::size_t>(layer.in), 0.0);
    const double* w = params_.data() + layer.w_offset;
    for (int r = 0; r < layer.out; ++r) {
      const double d = delta[static_cast<std::size_t>(r)];
      if (d == 0.0) continue;
      const double* wr = w + static_cast<std::size_t>(r) * layer.in;
      for (int c = 0; c < layer.in; ++c) delta_prev[static_cast<std::size_t>(c)] += d * wr[c];
    }
    const auto& act = activations[li - 1];
    for (int c = 0; c < layer.in; ++c) {
      const double a = act[static_cast<std::size_t>(c)];
      delta_prev[static_cast<std::size_t>(c)] *= 1.0 - a * a;
    }
    delta.swap(delta_prev);
  }
}

double MlpDenoiser::forward_flops_per_token() const {
  double flops = 0.0;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& layer = layers_[li];
    flops += 2.0 * layer.out * layer.in + layer.out;
    if (li + 1 < layers_.size()) flops += layer.out;  // tanh
  }
  flops += 3.0 * config_.vocab.size_k;  // softmax
  return flops;
}

}  // namespace difflab
