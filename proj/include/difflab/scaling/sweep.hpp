#pragma once

#include <cstdint>
#include <vector>

#include "difflab/scaling/fits.hpp"
#include "difflab/training/trainer.hpp"

namespace difflab {

// IsoFLOP sweep: for each (objective, budget, size) cell, pick a token count
// D so the exact training compute lands on the budget (within tolerance,
// after rounding to whole batches), train from scratch, and record the final
// evaluation NELBO. Cells are independent and may run on several threads;
// records come back in deterministic (objective, budget, size) order.
struct SweepConfig {
  std::vector<Objective> objectives = {Objective::low_var};
  std::vector<double> budgets;
  std::vector<std::vector<int>> model_sizes;  // hidden widths per size
  int batch_size = 64;
  ScheduleKind schedule = ScheduleKind::linear;
  AdamWConfig adamw;
  double peak_lr = 4e-4;
  double floor_lr = 2e-5;
  double budget_tolerance = 0.02;
  int eval_sequences = 64;
  int eval_draws = 64;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SweepSkip {
  std::string family;
  double budget;
  std::size_t size_index;
  std::string reason;
};

struct SweepResult {
  std::vector<SweepRecord> records;
  std::vector<SweepSkip> skipped;
};

SweepResult run_isoflop_sweep(const SyntheticLanguage& language, const SweepConfig& config);

// CSV round trip for sweep records (header: family,flops_c,params_n,tokens_d,val_loss).
std::string sweep_records_csv(std::span<const SweepRecord> records);
std::vector<SweepRecord> parse_sweep_records_csv(const std::string& text);

}  // namespace difflab
