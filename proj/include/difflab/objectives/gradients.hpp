#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "difflab/objectives/losses.hpp"

namespace difflab {

enum class Objective { ar, mdlm, low_var, duo, eso };

const char* objective_name(Objective objective);
Objective parse_objective(const std::string& name);

// Which corruption family an objective trains against (ar has none).
KernelFamily objective_family(Objective objective);

// Full specification of a loss: objective plus the knobs shared across
// training, evaluation and gradient checks.
struct LossSpec {
  Objective objective = Objective::mdlm;
  ScheduleKind schedule = ScheduleKind::linear;
  EsoConfig eso;
  DuoSumReading duo_reading = DuoSumReading::vocabulary;
};

// A sequence plus the number of leading positions that carry data; positions
// at or beyond active_length hold the mask token and are excluded from every
// loss sum (variable-length training option).
struct TrainingExample {
  TokenSequence x;
  int active_length;
};

// One Monte Carlo draw of any objective (dispatch over LossSpec). For the AR
// objective t and rng are unused and the value is exact.
LossSample objective_sample(const LossSpec& spec, const DenoiserView& view,
                            const TrainingExample& example, double t, RngStream& rng);

struct LossGrad {
  double loss;
  std::vector<double> grad;
};

// Loss and analytic parameter gradient of the Monte Carlo batch loss
//   mean_i loss(spec, batch[i], t_draws[i]; z-draws from split(i) of draw_seed).
// The z draws depend only on (draw_seed, batch), never on parameters, so
// finite differences see identical randomness. Throws NumericalError naming
// the first parameter index if any gradient entry is non-finite.
LossGrad loss_gradient(const LossSpec& spec, const DenoiserView& view,
                       std::span<const TrainingExample> batch, std::span<const double> t_draws,
                       std::uint64_t draw_seed);

// The same batch loss without the backward pass (finite-difference oracle
// and cheap evaluation loops).
double batch_loss(const LossSpec& spec, const DenoiserView& view,
                  std::span<const TrainingExample> batch, std::span<const double> t_draws,
                  std::uint64_t draw_seed);

}  // namespace difflab
