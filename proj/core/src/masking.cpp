#include "encore/masking.hpp"

#include <algorithm>

#include "encore/common.hpp"
#include "encore/rng.hpp"
#include "encore/vocab.hpp"

namespace encore {

MaskedBatch create_mlm_batch(const std::vector<std::vector<int32_t>>& sequences,
                             const MaskingPolicy& policy, int32_t vocab_size,
                             uint64_t seed, int64_t pad_to) {
  check<DataError>(!sequences.empty(), "create_mlm_batch: empty batch");
  check<DataError>(policy.mask_rate > 0.0 && policy.mask_rate < 1.0,
                   "create_mlm_batch: mask_rate must be in (0,1), got ",
                   policy.mask_rate);
  check<DataError>(policy.mask_token_frac + policy.random_token_frac <= 1.0 + 1e-12,
                   "create_mlm_batch: replacement fractions exceed 1");
  int64_t L = pad_to;
  for (const auto& s : sequences) {
    check<DataError>(!s.empty() && s[0] == Vocabulary::kCls,
                     "create_mlm_batch: sequence must start with CLS");
    L = std::max<int64_t>(L, static_cast<int64_t>(s.size()));
  }
  int64_t B = static_cast<int64_t>(sequences.size());

  MaskedBatch b;
  b.batch = B;
  b.seq_len = L;
  b.input_ids.assign(B * L, Vocabulary::kPad);
  b.original_ids.assign(B * L, Vocabulary::kPad);
  b.mlm_labels.assign(B * L, kIgnoreIndex);
  b.attention_valid.assign(B * L, 0);

  int32_t n_regular = vocab_size - Vocabulary::kNumReserved;
  Rng rng(seed);
  for (int64_t i = 0; i < B; ++i) {
    const auto& seq = sequences[i];
    check<DataError>(static_cast<int64_t>(seq.size()) <= L,
                     "create_mlm_batch: sequence of length ", seq.size(),
                     " exceeds pad_to ", L);
    for (int64_t j = 0; j < static_cast<int64_t>(seq.size()); ++j) {
      int32_t tok = seq[j];
      b.original_ids[i * L + j] = tok;
      b.input_ids[i * L + j] = tok;
      b.attention_valid[i * L + j] = 1;
      bool eligible = j > 0 && tok != Vocabulary::kPad;
      if (!eligible) continue;
      if (rng.uniform01() >= policy.mask_rate) continue;
      b.mlm_labels[i * L + j] = tok;
      double u = rng.uniform01();
      if (u < policy.mask_token_frac) {
        b.input_ids[i * L + j] = Vocabulary::kMask;
      } else if (u < policy.mask_token_frac + policy.random_token_frac) {
        check<DataError>(n_regular > 0,
                         "create_mlm_batch: random replacement needs a "
                         "non-reserved vocabulary");
        b.input_ids[i * L + j] =
            Vocabulary::kNumReserved +
            static_cast<int32_t>(rng.uniform_int(static_cast<uint32_t>(n_regular)));
      }
      // else: keep the original token, label still set
    }
  }
  return b;
}

}  // namespace encore
