#pragma once

#include <cstdint>
#include <string>

#include "encore/adam.hpp"
#include "encore/model.hpp"

namespace encore {

/// Everything needed to resume or reuse a training run. The on-disk format is
/// a text manifest (step, RNG state, config, tensor directory) followed by
/// raw little-endian float32 blobs; save -> load -> save is byte-identical.
struct Checkpoint {
  ModelParams params;
  AdamState opt;
  bool has_opt = false;
  int64_t step = 0;
  uint64_t rng_state = 0;
  uint64_t rng_inc = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Loads only the tensors needed to run the encoder (fine-tuning and
/// evaluation never touch decoder weights).
ModelParams load_encoder_params(const std::string& path);

}  // namespace encore
