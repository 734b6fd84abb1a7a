#include "encore/model_config.hpp"

#include <algorithm>

#include "encore/common.hpp"

namespace encore {

void ModelConfig::validate() const {
  check<DataError>(num_enc_layers >= 1, "config: num_enc_layers must be >= 1");
  check<DataError>(num_dec_layers >= 1, "config: num_dec_layers must be >= 1");
  check<DataError>(hidden_dim >= 1 && num_heads >= 1 &&
                       hidden_dim % num_heads == 0,
                   "config: hidden_dim ", hidden_dim, " not divisible by ",
                   num_heads, " heads");
  check<DataError>(ff_dim >= 1, "config: ff_dim must be >= 1");
  check<DataError>(vocab_size > 5, "config: vocab_size must exceed reserved ids");
  check<DataError>(max_seq_len >= 2, "config: max_seq_len must be >= 2");
  check<DataError>(dropout >= 0.0 && dropout < 1.0, "config: dropout ", dropout,
                   " outside [0,1)");
  check<DataError>(decoder_span == kSpanAll || decoder_span >= 1,
                   "config: decoder_span must be >= 1 or all");
}

std::string span_to_string(int32_t span) {
  return span == ModelConfig::kSpanAll ? "all" : std::to_string(span);
}

int32_t span_from_string(const std::string& s) {
  std::string t = s;
  std::transform(t.begin(), t.end(), t.begin(), ::tolower);
  if (t == "all") return ModelConfig::kSpanAll;
  try {
    size_t used = 0;
    int v = std::stoi(t, &used);
    check<DataError>(used == t.size(), "");
    return v;
  } catch (const std::exception&) {
    fail<DataError>("decoder span must be a positive integer or 'all', got '",
                    s, "'");
  }
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_kv() const {
  return {
      {"num_enc_layers", std::to_string(num_enc_layers)},
      {"num_dec_layers", std::to_string(num_dec_layers)},
      {"hidden_dim", std::to_string(hidden_dim)},
      {"num_heads", std::to_string(num_heads)},
      {"ff_dim", std::to_string(ff_dim)},
      {"vocab_size", std::to_string(vocab_size)},
      {"max_seq_len", std::to_string(max_seq_len)},
      {"dropout", fmt_double(dropout)},
      {"decoder_span", span_to_string(decoder_span)},
      {"tie_decoder_embeddings", tie_decoder_embeddings ? "true" : "false"},
  };
}

ModelConfig ModelConfig::from_kv(
    const std::vector<std::pair<std::string, std::string>>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "num_enc_layers") c.num_enc_layers = std::stoi(v);
    else if (k == "num_dec_layers") c.num_dec_layers = std::stoi(v);
    else if (k == "hidden_dim") c.hidden_dim = std::stoi(v);
    else if (k == "num_heads") c.num_heads = std::stoi(v);
    else if (k == "ff_dim") c.ff_dim = std::stoi(v);
    else if (k == "vocab_size") c.vocab_size = std::stoi(v);
    else if (k == "max_seq_len") c.max_seq_len = std::stoi(v);
    else if (k == "dropout") c.dropout = std::stod(v);
    else if (k == "decoder_span") c.decoder_span = span_from_string(v);
    else if (k == "tie_decoder_embeddings") c.tie_decoder_embeddings = (v == "true");
    else fail<DataError>("config: unknown model key '", k, "'");
  }
  c.validate();
  return c;
}

}  // namespace encore
