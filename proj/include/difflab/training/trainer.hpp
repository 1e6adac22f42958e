#pragma once

#include <functional>
#include <string>
#include <vector>

#include "difflab/denoisers/denoiser.hpp"
#include "difflab/objectives/gradients.hpp"
#include "difflab/training/language.hpp"
#include "difflab/training/optimizer.hpp"

namespace difflab {

struct TrainConfig {
  LossSpec loss;
  int batch_size = 64;
  std::int64_t steps = 1000;
  AdamWConfig adamw;
  LrSchedule lr;
  // Antithetic (t, 1-t) pairing across the batch; cheap unbiased variance
  // reduction for the time integral.
  bool antithetic_t = true;
  // Floor for t draws of the singular-weight objectives (mdlm, eso).
  double t_min = 1e-3;
  double random_length_fraction = 0.0;
  double grad_clip = 0.0;  // 0 = off
  std::uint64_t seed = 0;
  // Divergence guard: abort when the loss exceeds divergence_factor times the
  // first step's loss for divergence_patience consecutive steps.
  double divergence_factor = 10.0;
  int divergence_patience = 50;
};

struct StepMetrics {
  std::int64_t step;
  double loss;
  double lr;
  double grad_norm;
  std::int64_t tokens;  // cumulative
  double flops;         // cumulative exact training FLOPs
};

struct TrainResult {
  std::vector<StepMetrics> history;
  bool aborted = false;
  std::string abort_reason;
  std::int64_t total_tokens = 0;
  double total_flops = 0.0;
};

using MetricsCallback = std::function<void(const StepMetrics&)>;

// Visibility mode each objective drives the denoiser with.
VisMode objective_vis_mode(Objective objective);

// Fills per-item t draws for one batch: U[t_min, 1) for the singular-weight
// objectives, U(0, 1) otherwise, with optional antithetic pairing.
std::vector<double> draw_t_batch(Objective objective, int n, double t_min, bool antithetic,
                                 RngStream& rng);

// Deterministic training loop: identical (seed, config) runs produce
// identical final parameters and metric logs.
TrainResult train(Denoiser& model, const SyntheticLanguage& language, const TrainConfig& config,
                  const MetricsCallback& on_step = {});

}  // namespace difflab
