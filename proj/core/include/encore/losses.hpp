#pragma once

#include "encore/masking.hpp"
#include "encore/model.hpp"

namespace encore {

/// Raised when a batch carries no masked positions and must be skipped.
struct SkipBatch : Error {
  using Error::Error;
};

/// Mean cross-entropy over the batch's masked positions.
template <class S>
TensorT<S> mlm_loss(TapeT<S>* tape, const ModelParamsT<S>& params,
                    const MaskedBatch& batch, const EncoderOutputT<S>& enc) {
  std::vector<std::pair<int32_t, int32_t>> positions;
  std::vector<int32_t> targets;
  for (int64_t i = 0; i < batch.batch; ++i)
    for (int64_t j = 0; j < batch.seq_len; ++j) {
      int32_t label = batch.mlm_labels[i * batch.seq_len + j];
      if (label == kIgnoreIndex) continue;
      positions.emplace_back(static_cast<int32_t>(i), static_cast<int32_t>(j));
      targets.push_back(label);
    }
  if (positions.empty()) throw SkipBatch("mlm_loss: batch has no masked positions");
  auto logits = mlm_logits(tape, params, enc, positions);
  return ops::cross_entropy_from_logits(tape, logits, targets, kIgnoreIndex);
}

/// Decoder targets: the original (unmasked) tokens x_1..x_{L-1}, with PAD
/// mapped to the ignore index.
inline std::pair<std::vector<int32_t>, std::vector<int32_t>> decoder_targets(
    const MaskedBatch& batch) {
  int64_t B = batch.batch, L = batch.seq_len;
  int64_t n = L - 1;
  std::vector<int32_t> ids(B * n), ce(B * n);
  for (int64_t i = 0; i < B; ++i)
    for (int64_t j = 0; j < n; ++j) {
      int32_t tok = batch.original_ids[i * L + j + 1];
      ids[i * n + j] = tok;
      ce[i * n + j] = (tok == Vocabulary::kPad) ? kIgnoreIndex : tok;
    }
  return {std::move(ids), std::move(ce)};
}

/// Mean per-token reconstruction loss of the weak decoder: the original
/// sequence predicted from h0 and the restricted window.
template <class S>
TensorT<S> weak_decoder_loss(TapeT<S>* tape, const ModelParamsT<S>& params,
                             const MaskedBatch& batch, TensorT<S> h0,
                             bool train, uint64_t seed) {
  check<ShapeError>(batch.seq_len >= 2,
                    "weak_decoder_loss: no token positions to reconstruct");
  auto [ids, ce_targets] = decoder_targets(batch);
  int64_t n = batch.seq_len - 1;
  auto dec = decoder_forward(tape, params, h0, ids, batch.batch, n, train, seed);
  auto flat = ops::reshape(tape, dec.logits,
                           {batch.batch * n, params.config.vocab_size});
  return ops::cross_entropy_from_logits(tape, flat, ce_targets, kIgnoreIndex);
}

template <class S>
struct LossPartsT {
  TensorT<S> total;
  TensorT<S> mlm;
  TensorT<S> dec;
};

using LossParts = LossPartsT<float>;

/// total = mlm + decoder_weight * dec. With decoder_weight == 0 the decoder
/// still runs for logging but stays off the tape, so no gradient reaches it.
template <class S>
LossPartsT<S> combined_loss(TapeT<S>* tape, const ModelParamsT<S>& params,
                            const MaskedBatch& batch, bool train, uint64_t seed,
                            double decoder_weight = 1.0) {
  auto enc = encoder_forward(tape, params, batch.input_ids,
                             batch.attention_valid, batch.batch, batch.seq_len,
                             train, derive_seed(seed, 1));
  auto mlm = mlm_loss(tape, params, batch, enc);

  std::vector<std::pair<int32_t, int32_t>> cls_pos(batch.batch);
  for (int64_t b = 0; b < batch.batch; ++b)
    cls_pos[b] = {static_cast<int32_t>(b), 0};

  TensorT<S> dec;
  TensorT<S> total;
  if (decoder_weight == 0.0) {
    auto h0 = ops::gather_positions<S>(nullptr, enc.hidden, cls_pos);
    dec = weak_decoder_loss<S>(nullptr, params, batch, h0, train,
                               derive_seed(seed, 2));
    total = mlm;
  } else {
    auto h0 = ops::gather_positions(tape, enc.hidden, cls_pos);
    dec = weak_decoder_loss(tape, params, batch, h0, train, derive_seed(seed, 2));
    total = (decoder_weight == 1.0)
                ? ops::add(tape, mlm, dec)
                : ops::add(tape, mlm,
                           ops::scale(tape, dec, static_cast<S>(decoder_weight)));
  }
  return {total, mlm, dec};
}

}  // namespace encore
