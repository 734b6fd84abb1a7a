#pragma once

#include <cstdint>
#include <vector>

namespace encore {

constexpr int32_t kIgnoreIndex = -100;

/// One MLM training batch, rectangular [B, L] with PAD fill.
struct MaskedBatch {
  int64_t batch = 0;
  int64_t seq_len = 0;
  std::vector<int32_t> input_ids;        // post-masking
  std::vector<int32_t> original_ids;     // pre-masking
  std::vector<int32_t> mlm_labels;       // kIgnoreIndex at unmasked positions
  std::vector<uint8_t> attention_valid;  // false on PAD

  int64_t masked_count() const {
    int64_t n = 0;
    for (int32_t l : mlm_labels) n += (l != kIgnoreIndex);
    return n;
  }
};

struct MaskingPolicy {
  double mask_rate = 0.15;
  // replacement split among selected positions
  double mask_token_frac = 0.8;
  double random_token_frac = 0.1;  // remainder stays unchanged
};

/// Independently selects each non-CLS, non-PAD position with probability
/// mask_rate and applies the replacement policy. Bit-deterministic per seed.
/// Sequences are padded to pad_to (or the longest in the batch when 0).
MaskedBatch create_mlm_batch(const std::vector<std::vector<int32_t>>& sequences,
                             const MaskingPolicy& policy, int32_t vocab_size,
                             uint64_t seed, int64_t pad_to = 0);

}  // namespace encore
