#include <cmath>
#include <stdexcept>

#include "difflab/core/errors.hpp"
#include "difflab/scaling/flops.hpp"
#include "difflab/training/trainer.hpp"

namespace difflab {

VisMode objective_vis_mode(Objective objective) {
  switch (objective) {
    case Objective::ar: return VisMode::causal;
    case Objective::mdlm:
    case Objective::low_var:
    case Objective::duo: return VisMode::bidirectional;
    case Objective::eso: return VisMode::permuted_causal;
  }
  throw std::logic_error("objective_vis_mode: unknown objective");
}

std::vector<double> draw_t_batch(Objective objective, int n, double t_min, bool antithetic,
                                 RngStream& rng) {
  std::vector<double> draws(static_cast<std::size_t>(n), 0.0);
  if (objective == Objective::ar) return draws;
  const bool floored = objective == Objective::mdlm || objective == Objective::eso;
  auto map_u = [&](double u) {
    if (floored) return t_min + (1.0 - t_min) * u;
    // open interval (0, 1): kappa and the weight are singular at both ends
    while (u == 0.0) u = rng.next_unit();
    return u;
  };
  double u = 0.0;
  for (int i = 0; i < n; ++i) {
    if (antithetic && i % 2 == 1) {
      draws[static_cast<std::size_t>(i)] = map_u(1.0 - u);
    } else {
      u = rng.next_unit();
      draws[static_cast<std::size_t>(i)] = map_u(u);
    }
  }
  return draws;
}

TrainResult train(Denoiser& model, const SyntheticLanguage& language, const TrainConfig& config,
                  const MetricsCallback& on_step) {
  if (config.batch_size <= 0 || config.steps <= 0) {
    throw ConfigError("train: batch_size and steps must be positive");
  }
  if (language.vocab() != model.vocab() || language.length() != model.length()) {
    throw ConfigError("train: model and language disagree on vocab or length");
  }
  const DenoiserView view{&model, objective_vis_mode(config.loss.objective)};
  const ArchDescriptor descriptor = descriptor_for(model);
  AdamW optimizer(model.parameter_count(), config.adamw);
  const RngStream root(config.seed);
  const DataConfig data_config{config.random_length_fraction};

  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(config.steps));
  double initial_loss = 0.0;
  int diverged_streak = 0;

  std::vector<TrainingExample> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));
  for (std::int64_t step = 0; step < config.steps; ++step) {
    RngStream data_rng = root.split(static_cast<std::uint64_t>(step) * 4 + 1);
    RngStream t_rng = root.split(static_cast<std::uint64_t>(step) * 4 + 2);
    const std::uint64_t draw_seed =
        root.split(static_cast<std::uint64_t>(step) * 4 + 3).seed();

    batch.clear();
    std::int64_t batch_tokens = 0;
    for (int i = 0; i < config.batch_size; ++i) {
      Example example = draw_example(language, data_config, data_rng);
      batch_tokens += example.effective_length;
      batch.push_back({std::move(example.tokens), example.effective_length});
    }
    const std::vector<double> t_draws = draw_t_batch(
        config.loss.objective, config.batch_size, config.t_min, config.antithetic_t, t_rng);

    LossGrad lg = loss_gradient(config.loss, view, batch, t_draws, draw_seed);
    double grad_norm = 0.0;
    for (double g : lg.grad) grad_norm += g * g;
    grad_norm = std::sqrt(grad_norm);
    if (config.grad_clip > 0.0 && grad_norm > config.grad_clip) {
      const double scale = config.grad_clip / grad_norm;
      for (auto& g : lg.grad) g *= scale;
    }

    const double lr = config.lr.at(step);
    optimizer.step(model.parameters(), lg.grad, lr);

    result.total_tokens += batch_tokens;
    result.total_flops =
        training_flops(descriptor, static_cast<double>(result.total_tokens)).exact;
    const StepMetrics metrics{step,      lg.loss,          lr,
                              grad_norm, result.total_tokens, result.total_flops};
    result.history.push_back(metrics);
    if (on_step) on_step(metrics);

    if (step == 0) {
      initial_loss = std::abs(lg.loss);
    } else if (std::abs(lg.loss) > config.divergence_factor * std::max(initial_loss, 1e-12)) {
      if (++diverged_streak >= config.divergence_patience) {
        result.aborted = true;
        result.abort_reason = "divergence guard: loss " + std::to_string(lg.loss) + " at step " +
                              std::to_string(step) + " exceeded " +
                              std::to_string(config.divergence_factor) + "x initial loss " +
                              std::to_string(initial_loss) + " for " +
                              std::to_string(config.divergence_patience) + " consecutive steps";
        break;
      }
    } else {
      diverged_streak = 0;
    }
  }
  return result;
}

}  // namespace difflab
