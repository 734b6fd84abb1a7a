#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "encore/tensor.hpp"

namespace encore {

struct AdamConfig {
  double lr_peak = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int64_t warmup_steps = 1000;
  int64_t total_steps = 20000;
};

/// Piecewise-linear schedule: 0 -> lr_peak over warmup_steps, then linear
/// decay to 0 at total_steps; 0 past the end.
double lr_at(int64_t step, const AdamConfig& cfg);

/// Per-parameter moment buffers, keyed by tensor name so a subset of the
/// model can be stepped (e.g. encoder-only training).
struct AdamState {
  AdamConfig cfg;
  int64_t t = 0;
  std::unordered_map<std::string, std::pair<std::vector<float>, std::vector<float>>>
      slots;

  std::pair<std::vector<float>, std::vector<float>>& slot(const std::string& name,
                                                          int64_t size);
};

/// Global-norm gradient clip, decoupled weight decay, then the bias-corrected
/// Adam update, at the given learning rate. Reads each tensor's grad buffer.
/// Throws NumericError on non-finite gradients, naming the step.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double lr);

}  // namespace encore
