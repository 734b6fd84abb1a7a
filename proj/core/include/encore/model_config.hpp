#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace encore {

/// Architecture hyperparameters shared by the encoder, the restricted
/// decoder, and the MLM head. decoder_span == kSpanAll lifts the attention
/// window restriction.
struct ModelConfig {
  static constexpr int32_t kSpanAll = -1;

  int32_t num_enc_layers = 4;
  int32_t num_dec_layers = 2;
  int32_t hidden_dim = 128;
  int32_t num_heads = 4;
  int32_t ff_dim = 512;
  int32_t vocab_size = 8000;
  int32_t max_seq_len = 128;
  double dropout = 0.1;
  int32_t decoder_span = 2;
  bool tie_decoder_embeddings = true;

  void validate() const;

  std::vector<std::pair<std::string, std::string>> to_kv() const;
  static ModelConfig from_kv(
      const std::vector<std::pair<std::string, std::string>>& kv);
};

/// "all" <-> kSpanAll, otherwise the integer span.
std::string span_to_string(int32_t span);
int32_t span_from_string(const std::string& s);

}  // namespace encore
