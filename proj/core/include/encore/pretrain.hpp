#pragma once

#include <cstdint>
#include <string>

#include "encore/adam.hpp"
#include "encore/masking.hpp"
#include "encore/model_config.hpp"

namespace encore {

struct PretrainOptions {
  ModelConfig model;
  AdamConfig optim;
  MaskingPolicy masking;
  int64_t steps = 20000;
  int64_t batch_size = 32;
  uint64_t seed = 1;
  double decoder_weight = 1.0;
  int64_t checkpoint_interval = 1000;
  int64_t keep_last = 3;
  int32_t max_vocab = 8000;
  int32_t min_freq = 1;
  std::string corpus_path;
  std::string out_dir;
  std::string resume_from;  // optional checkpoint to continue from
  bool quiet = false;
};

struct PretrainResult {
  std::string final_checkpoint;
  std::string best_checkpoint;
  std::string vocab_path;
  std::string loss_csv;
  double final_mlm = 0.0;
  double final_dec = 0.0;
  int64_t steps_run = 0;
};

/// Runs the combined-objective pretraining loop: sample batch, mask, forward,
/// backward, clip/decay/Adam, on a linear warmup+decay schedule. Emits
/// loss.csv (step,lr,loss_total,loss_mlm,loss_dec), periodic checkpoints,
/// a best-MLM checkpoint, and a final checkpoint. Bit-deterministic per seed.
PretrainResult pretrain(const PretrainOptions& opt);

}  // namespace encore
