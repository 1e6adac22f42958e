#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "difflab/core/errors.hpp"
#include "difflab/denoisers/mlp.hpp"
#include "difflab/evaluation/metrics.hpp"
#include "difflab/scaling/flops.hpp"
#include "difflab/scaling/sweep.hpp"

namespace difflab {

namespace {

struct Cell {
  std::size_t objective_index;
  std::size_t budget_index;
  std::size_t size_index;
};

struct CellOutcome {
  bool ok = false;
  SweepRecord record;
  std::string skip_reason;
};

CellOutcome run_cell(const SyntheticLanguage& language, const SweepConfig& config,
                     const Cell& cell) {
  const Objective objective = config.objectives[cell.objective_index];
  const double budget = config.budgets[cell.budget_index];

  MlpConfig model_config;
  model_config.vocab = language.vocab();
  model_config.length = language.length();
  model_config.hidden = config.model_sizes[cell.size_index];
  model_config.time_conditioned = objective == Objective::duo;
  model_config.init_seed = RngStream(config.seed)
                               .split(cell.objective_index * 1000003 + cell.budget_index * 1009 +
                                      cell.size_index + 1)
                               .seed();
  MlpDenoiser model(model_config);
  const ArchDescriptor descriptor = descriptor_for(model);

  const double tokens_per_step =
      static_cast<double>(config.batch_size) * language.length();
  const double cost_per_step = training_flops(descriptor, tokens_per_step).exact;
  const auto steps = static_cast<std::int64_t>(std::llround(budget / cost_per_step));
  CellOutcome outcome;
  if (steps < 1) {
    outcome.skip_reason = "budget infeasible: fewer than one optimizer step";
    return outcome;
  }
  const double actual =
      training_flops(descriptor, static_cast<double>(steps) * tokens_per_step).exact;
  if (std::abs(actual - budget) / budget > config.budget_tolerance) {
    outcome.skip_reason = "budget infeasible: step rounding misses the budget tolerance";
    return outcome;
  }

  TrainConfig train_config;
  train_config.loss.objective = objective;
  train_config.loss.schedule = config.schedule;
  train_config.batch_size = config.batch_size;
  train_config.steps = steps;
  train_config.adamw = config.adamw;
  train_config.lr = {LrKind::cosine, config.peak_lr, config.floor_lr, 0, 0, steps};
  train_config.seed = model_config.init_seed ^ 0x5eedull;
  const TrainResult trained = train(model, language, train_config);
  if (trained.aborted) {
    outcome.skip_reason = "training aborted: " + trained.abort_reason;
    return outcome;
  }

  // Evaluation uses the likelihood-bound form of the family (low_var trains
  // with the surrogate but is always scored with the exact bound).
  LossSpec eval_spec = train_config.loss;
  if (eval_spec.objective == Objective::low_var) eval_spec.objective = Objective::mdlm;
  RngStream eval_rng = RngStream(train_config.seed).split(0xe7a1);
  std::vector<TokenSequence> eval_set;
  eval_set.reserve(static_cast<std::size_t>(config.eval_sequences));
  for (int i = 0; i < config.eval_sequences; ++i) eval_set.push_back(language.sample(eval_rng));
  const DenoiserView view{&model, objective_vis_mode(eval_spec.objective)};
  const NelboEstimate estimate =
      eval_nelbo(eval_spec, view, eval_set, config.eval_draws, eval_rng.split(7).seed());

  outcome.ok = true;
  outcome.record = {actual, static_cast<double>(model.parameter_count()),
                    static_cast<double>(trained.total_tokens), estimate.nelbo_per_token,
                    objective_name(objective)};
  return outcome;
}

}  // namespace

SweepResult run_isoflop_sweep(const SyntheticLanguage& language, const SweepConfig& config) {
  if (config.budgets.empty() || config.model_sizes.empty() || config.objectives.empty()) {
    throw ConfigError("run_isoflop_sweep: objectives, budgets and model sizes must be non-empty");
  }
  std::vector<Cell> cells;
  for (std::size_t o = 0; o < config.objectives.size(); ++o) {
    for (std::size_t b = 0; b < config.budgets.size(); ++b) {
      for (std::size_t s = 0; s < config.model_sizes.size(); ++s) {
        cells.push_back({o, b, s});
      }
    }
  }
  std::vector<CellOutcome> outcomes(cells.size());

  const int threads = std::max(1, config.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      outcomes[i] = run_cell(language, config, cells[i]);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cells.size()) break;
          outcomes[i] = run_cell(language, config, cells[i]);
        }
      });
    }
    for (auto& worker : pool) worker.join();
  }

  SweepResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (outcomes[i].ok) {
      result.records.push_back(std::move(outcomes[i].record));
    } else {
      result.skipped.push_back({objective_name(config.objectives[cells[i].objective_index]),
                                config.budgets[cells[i].budget_index], cells[i].size_index,
                                outcomes[i].skip_reason});
    }
  }
  return result;
}

std::string sweep_records_csv(std::span<const SweepRecord> records) {
  std::ostringstream out;
  out.precision(17);
  out << "family,flops_c,params_n,tokens_d,val_loss\n";
  for (const auto& r : records) {
    out << r.family << ',' << r.flops_c << ',' << r.params_n << ',' << r.tokens_d << ','
        << r.val_loss << '\n';
  }
  return out.str();
}

std::vector<SweepRecord> parse_sweep_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ArtifactError("sweep CSV: empty file");
  if (line != "family,flops_c,params_n,tokens_d,val_loss") {
    throw ArtifactError("sweep CSV: unexpected header '" + line + "'");
  }
  std::vector<SweepRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    SweepRecord r;
    std::string field;
    if (!std::getline(row, r.family, ',')) throw ArtifactError("sweep CSV: bad row: " + line);
    auto read_double = [&](double& dst) {
      if (!std::getline(row, field, ',')) throw ArtifactError("sweep CSV: bad row: " + line);
      dst = std::stod(field);
    };
    read_double(r.flops_c);
    read_double(r.params_n);
    read_double(r.tokens_d);
    read_double(r.val_loss);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace difflab
