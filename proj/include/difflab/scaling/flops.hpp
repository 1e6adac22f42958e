#pragma once

#include <string>

#include "difflab/denoisers/denoiser.hpp"

namespace difflab {

// Exact per-token cost description of a backend, for FLOP accounting.
struct ArchDescriptor {
  std::string name;
  double param_count = 0.0;            // non-embedding parameters N
  double forward_flops_per_token = 0.0;
};

// Throws ConfigError when the model has no defined exact count.
ArchDescriptor descriptor_for(const Denoiser& model);

struct TrainingFlops {
  double exact;       // tokens * (forward + backward), backward = 2x forward
  double approx_6nd;  // the C ~ 6 N D heuristic, for comparison
};

TrainingFlops training_flops(const ArchDescriptor& descriptor, double tokens);

}  // namespace difflab
