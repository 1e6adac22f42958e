#include "difflab/core/errors.hpp"
#include "difflab/scaling/flops.hpp"

namespace difflab {

ArchDescriptor descriptor_for(const Denoiser& model) {
  const double forward = model.forward_flops_per_token();
  if (!(forward > 0.0)) {
    throw ConfigError("descriptor_for: architecture '" + model.architecture_name() +
                      "' has no exact FLOP count");
  }
  return {model.architecture_name(), static_cast<double>(model.parameter_count()), forward};
}

TrainingFlops training_flops(const ArchDescriptor& descriptor, double tokens) {
  if (!(descriptor.forward_flops_per_token > 0.0)) {
    throw ConfigError("training_flops: unknown architecture (no forward cost)");
  }
  return {tokens * 3.0 * descriptor.forward_flops_per_token,
          6.0 * descriptor.param_count * tokens};
}

}  // namespace difflab
