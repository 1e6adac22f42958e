#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace difflab {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay: the decay is applied directly to the
// parameters (scaled by lr), never through the moment estimates. Moments use
// standard bias correction.
class AdamW {
 public:
  AdamW(std::size_t parameter_count, AdamWConfig config = {});

  // Aborts (NumericalError, reporting the parameter index) on non-finite
  // gradients without touching parameters or state.
  void step(std::span<double> params, std::span<const double> grads, double lr);

  std::int64_t step_count() const { return step_count_; }
  const AdamWConfig& config() const { return config_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

 private:
  AdamWConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t step_count_ = 0;
};

enum class LrKind { cosine, warmup_constant_decay };

// Piecewise learning-rate schedule.
//   cosine: optional linear warmup 0 -> peak, then half-cosine peak -> floor
//           over the remaining steps.
//   warmup_constant_decay: linear warmup 0 -> peak, constant until
//           decay_start, then linear decay to floor at total_steps.
struct LrSchedule {
  LrKind kind = LrKind::cosine;
  double peak = 4e-4;
  double floor = 2e-5;
  std::int64_t warmup_steps = 0;
  std::int64_t decay_start = 0;  // warmup_constant_decay only
  std::int64_t total_steps = 1;

  // Steps past total clamp to the floor; *clamped reports that case.
  double at(std::int64_t step, bool* clamped = nullptr) const;
};

}  // namespace difflab
