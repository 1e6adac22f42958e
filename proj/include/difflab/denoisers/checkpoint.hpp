#pragma once

#include <memory>
#include <string>

#include "difflab/core/schedule.hpp"
#include "difflab/denoisers/denoiser.hpp"

namespace difflab {

struct CheckpointMeta {
  std::string objective;  // informational: what the model was trained with
  ScheduleKind schedule = ScheduleKind::linear;
};

// Versioned JSON container: architecture descriptor + flat parameter vector
// (hexfloat-encoded, bit-exact round trip) + vocab + schedule kind. Written
// atomically (temp file + rename).
void save_checkpoint(const std::string& path, const Denoiser& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<Denoiser> model;
  CheckpointMeta meta;
};

// Throws ArtifactError on version or schema mismatch.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Shared atomic text-file writer (write temp, then rename).
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace difflab
