#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "difflab/core/errors.hpp"
#include "difflab/training/optimizer.hpp"

namespace difflab {

AdamW::AdamW(std::size_t parameter_count, AdamWConfig config)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ConfigError("AdamW: betas must lie in [0, 1)");
  }
  if (!(config_.eps > 0.0)) throw ConfigError("AdamW: eps must be positive");
}

void AdamW::step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("AdamW::step: shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("AdamW::step aborted: non-finite gradient at parameter " +
                           std::to_string(i));
    }
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i] * grads[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) + config_.weight_decay * params[i]);
  }
}

double LrSchedule::at(std::int64_t step, bool* clamped) const {
  if (clamped != nullptr) *clamped = false;
  if (step < 0) throw std::invalid_argument("LrSchedule: negative step");
  if (step > total_steps) {
    if (clamped != nullptr) *clamped = true;
    return floor;
  }
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  switch (kind) {
    case LrKind::cosine: {
      const std::int64_t span = total_steps - warmup_steps;
      if (span <= 0) return floor;
      const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
      return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * progress));
    }
    case LrKind::warmup_constant_decay: {
      if (step <= decay_start) return peak;
      const std::int64_t span = total_steps - decay_start;
      if (span <= 0) return floor;
      const double progress = static_cast<double>(step - decay_start) / static_cast<double>(span);
      return peak + (floor - peak) * progress;
    }
  }
  throw std::logic_error("LrSchedule: unknown kind");
}

}  // namespace difflab
