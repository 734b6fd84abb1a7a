#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "encore/masking.hpp"
#include "encore/model_config.hpp"
#include "encore/ops.hpp"
#include "encore/rng.hpp"
#include "encore/vocab.hpp"

namespace encore {

constexpr double kLayerNormEps = 1e-12;
constexpr double kInitStd = 0.02;

/// Ordered, named parameter store. Order is the checkpoint serialization
/// order and the optimizer-state pairing order, so it must stay stable.
template <class S>
struct ModelParamsT {
  ModelConfig config;
  std::vector<std::pair<std::string, TensorT<S>>> named;
  std::unordered_map<std::string, size_t> index;

  void add(const std::string& name, TensorT<S> t) {
    check<DataError>(index.find(name) == index.end(),
                     "params: duplicate tensor '", name, "'");
    index[name] = named.size();
    named.emplace_back(name, std::move(t));
  }

  bool has(const std::string& name) const {
    return index.find(name) != index.end();
  }

  TensorT<S>& at(const std::string& name) {
    auto it = index.find(name);
    check<DataError>(it != index.end(), "params: missing tensor '", name, "'");
    return named[it->second].second;
  }
  const TensorT<S>& at(const std::string& name) const {
    auto it = index.find(name);
    check<DataError>(it != index.end(), "params: missing tensor '", name, "'");
    return named[it->second].second;
  }

  void zero_grads() {
    for (auto& [name, t] : named) t.zero_grad();
  }

  int64_t total_parameters() const {
    int64_t n = 0;
    for (const auto& [name, t] : named) n += t.numel();
    return n;
  }

  template <class T>
  ModelParamsT<T> cast() const {
    ModelParamsT<T> out;
    out.config = config;
    for (const auto& [name, t] : named) out.add(name, t.template cast<T>());
    return out;
  }
};

using ModelParams = ModelParamsT<float>;

namespace detail {

template <class S>
void add_block(ModelParamsT<S>& p, const std::string& prefix, Rng& rng) {
  int64_t d = p.config.hidden_dim, ff = p.config.ff_dim;
  auto w = [&](Shape s) { return TensorT<S>::randn(std::move(s), rng, kInitStd, true); };
  auto z = [&](Shape s) { return TensorT<S>::zeros(std::move(s), true); };
  auto ones = [&](int64_t n) {
    auto t = TensorT<S>::zeros({n}, true);
    for (auto& v : t.data()) v = S(1);
    return t;
  };
  p.add(prefix + ".attn.wq", w({d, d}));
  p.add(prefix + ".attn.bq", z({d}));
  p.add(prefix + ".attn.wk", w({d, d}));
  p.add(prefix + ".attn.bk", z({d}));
  p.add(prefix + ".attn.wv", w({d, d}));
  p.add(prefix + ".attn.bv", z({d}));
  p.add(prefix + ".attn.wo", w({d, d}));
  p.add(prefix + ".attn.bo", z({d}));
  p.add(prefix + ".ln1.gamma", ones(d));
  p.add(prefix + ".ln1.beta", z({d}));
  p.add(prefix + ".ff.w1", w({d, ff}));
  p.add(prefix + ".ff.b1", z({ff}));
  p.add(prefix + ".ff.w2", w({ff, d}));
  p.add(prefix + ".ff.b2", z({d}));
  p.add(prefix + ".ln2.gamma", ones(d));
  p.add(prefix + ".ln2.beta", z({d}));
}

}  // namespace detail

template <class S>
ModelParamsT<S> init_model_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ModelParamsT<S> p;
  p.config = config;
  Rng rng(seed);
  int64_t d = config.hidden_dim, V = config.vocab_size, P = config.max_seq_len;
  auto w = [&](Shape s) { return TensorT<S>::randn(std::move(s), rng, kInitStd, true); };
  auto z = [&](Shape s) { return TensorT<S>::zeros(std::move(s), true); };
  auto ones = [&](int64_t n) {
    auto t = TensorT<S>::zeros({n}, true);
    for (auto& v : t.data()) v = S(1);
    return t;
  };

  p.add("emb.tok", w({V, d}));
  p.add("emb.pos", w({P, d}));
  p.add("emb.ln.gamma", ones(d));
  p.add("emb.ln.beta", z({d}));
  for (int32_t i = 0; i < config.num_enc_layers; ++i)
    detail::add_block(p, strcat("enc.L", i), rng);
  p.add("head.w", w({d, d}));
  p.add("head.b", z({d}));
  p.add("head.ln.gamma", ones(d));
  p.add("head.ln.beta", z({d}));
  p.add("head.out_bias", z({V}));

  if (!config.tie_decoder_embeddings) {
    p.add("dec.tok", w({V, d}));
    p.add("dec.pos", w({P, d}));
  }
  for (int32_t i = 0; i < config.num_dec_layers; ++i)
    detail::add_block(p, strcat("dec.L", i), rng);
  p.add("dec.out_bias", z({V}));
  return p;
}

/// Per-forward dropout seeding: consecutive call sites draw consecutive
/// derived substreams, so a pass is reproducible from (seed, train) alone.
struct DropoutStream {
  uint64_t seed;
  uint64_t n = 0;
  uint64_t next() { return derive_seed(seed, n++); }
};

template <class S>
struct EncoderOutputT {
  TensorT<S> hidden;  // [B, L, d]; position 0 holds the CLS representation
  int64_t batch = 0;
  int64_t seq_len = 0;
};

using EncoderOutput = EncoderOutputT<float>;

namespace detail {

/// One post-norm transformer block: self-attention + FFN, residuals, LNs.
template <class S>
TensorT<S> transformer_block(TapeT<S>* tape, const ModelParamsT<S>& p,
                             const std::string& prefix, TensorT<S> x,
                             const Mask& attn_mask, bool train,
                             DropoutStream& drop) {
  const ModelConfig& cfg = p.config;
  double rate = cfg.dropout;
  int64_t heads = cfg.num_heads;
  int64_t dh = cfg.hidden_dim / heads;

  auto q = ops::split_heads(tape, ops::linear(tape, x, p.at(prefix + ".attn.wq"),
                                              p.at(prefix + ".attn.bq")), heads);
  auto k = ops::split_heads(tape, ops::linear(tape, x, p.at(prefix + ".attn.wk"),
                                              p.at(prefix + ".attn.bk")), heads);
  auto v = ops::split_heads(tape, ops::linear(tape, x, p.at(prefix + ".attn.wv"),
                                              p.at(prefix + ".attn.bv")), heads);
  auto scores = ops::scale(tape, ops::matmul_qk(tape, q, k),
                           static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh))));
  auto probs = ops::softmax_masked(tape, scores, attn_mask);
  probs = ops::dropout(tape, probs, rate, drop.next(), train);
  auto ctx = ops::merge_heads(tape, ops::matmul_pv(tape, probs, v));
  auto attn_out = ops::linear(tape, ctx, p.at(prefix + ".attn.wo"),
                              p.at(prefix + ".attn.bo"));
  attn_out = ops::dropout(tape, attn_out, rate, drop.next(), train);
  x = ops::layer_norm(tape, ops::add(tape, x, attn_out),
                      p.at(prefix + ".ln1.gamma"), p.at(prefix + ".ln1.beta"),
                      kLayerNormEps);
  auto ff = ops::linear(tape, x, p.at(prefix + ".ff.w1"), p.at(prefix + ".ff.b1"));
  ff = ops::gelu(tape, ff);
  ff = ops::linear(tape, ff, p.at(prefix + ".ff.w2"), p.at(prefix + ".ff.b2"));
  ff = ops::dropout(tape, ff, rate, drop.next(), train);
  x = ops::layer_norm(tape, ops::add(tape, x, ff), p.at(prefix + ".ln2.gamma"),
                      p.at(prefix + ".ln2.beta"), kLayerNormEps);
  return x;
}

}  // namespace detail

/// Bidirectional encoder over [CLS, x_1, ..., x_n]. PAD positions are masked
/// out of attention for every query, so valid outputs never depend on them.
template <class S>
EncoderOutputT<S> encoder_forward(TapeT<S>* tape, const ModelParamsT<S>& p,
                                  const std::vector<int32_t>& input_ids,
                                  const std::vector<uint8_t>& attention_valid,
                                  int64_t B, int64_t L, bool train,
                                  uint64_t seed) {
  const ModelConfig& cfg = p.config;
  check<ShapeError>(static_cast<int64_t>(input_ids.size()) == B * L,
                    "encoder_forward: ids size ", input_ids.size(),
                    " != B*L = ", B * L);
  check<ShapeError>(static_cast<int64_t>(attention_valid.size()) == B * L,
                    "encoder_forward: attention_valid size mismatch");
  check<ShapeError>(L <= cfg.max_seq_len, "encoder_forward: sequence length ",
                    L, " exceeds max_seq_len ", cfg.max_seq_len);
  for (int64_t b = 0; b < B; ++b)
    check<DataError>(input_ids[b * L] == Vocabulary::kCls,
                     "encoder_forward: row ", b, " does not start with CLS");

  DropoutStream drop{derive_seed(seed, 0xE11C)};
  auto x = ops::embedding(tape, p.at("emb.tok"), input_ids, {B, L});
  x = ops::add_broadcast(tape, x, ops::slice_rows(tape, p.at("emb.pos"), 0, L));
  x = ops::layer_norm(tape, x, p.at("emb.ln.gamma"), p.at("emb.ln.beta"),
                      kLayerNormEps);
  x = ops::dropout(tape, x, cfg.dropout, drop.next(), train);

  Mask key_mask = Mask::full({B, 1, 1, L}, false);
  for (int64_t i = 0; i < B * L; ++i) key_mask.v[i] = attention_valid[i];

  for (int32_t i = 0; i < cfg.num_enc_layers; ++i)
    x = detail::transformer_block(tape, p, strcat("enc.L", i), x, key_mask,
                                  train, drop);
  return {x, B, L};
}

/// MLM projection head at the requested (batch, position) pairs; the output
/// projection is tied to the input embedding table.
template <class S>
TensorT<S> mlm_logits(TapeT<S>* tape, const ModelParamsT<S>& p,
                      const EncoderOutputT<S>& enc,
                      const std::vector<std::pair<int32_t, int32_t>>& positions) {
  for (const auto& [b, pos] : positions)
    check<ShapeError>(pos != 0,
                      "mlm_logits: position 0 (CLS) has no MLM target");
  auto h = ops::gather_positions(tape, enc.hidden, positions);
  h = ops::linear(tape, h, p.at("head.w"), p.at("head.b"));
  h = ops::gelu(tape, h);
  h = ops::layer_norm(tape, h, p.at("head.ln.gamma"), p.at("head.ln.beta"),
                      kLayerNormEps);
  return ops::matmul_tied_vocab(tape, h, p.at("emb.tok"), p.at("head.out_bias"));
}

/// Attention reach for the restricted decoder, over n token slots plus the
/// CLS slot 0. Slot p >= 1 sees {0} + {max(1, p-span), ..., p}; slot 0 sees
/// only itself; span == kSpanAll lifts the window.
inline Mask build_decoder_mask(int64_t n, int32_t span) {
  check<DataError>(n >= 0, "build_decoder_mask: n must be >= 0");
  check<DataError>(span == ModelConfig::kSpanAll || span >= 1,
                   "build_decoder_mask: span must be >= 1 or all");
  int64_t L = n + 1;
  Mask m = Mask::full({L, L}, false);
  m.v[0] = 1;  // slot 0 -> slot 0
  for (int64_t p = 1; p < L; ++p) {
    m.v[p * L + 0] = 1;
    int64_t lo = (span == ModelConfig::kSpanAll) ? 1 : std::max<int64_t>(1, p - span);
    for (int64_t j = lo; j <= p; ++j) m.v[p * L + j] = 1;
  }
  return m;
}

template <class S>
struct DecoderOutputT {
  TensorT<S> logits;       // [B, n, V]; slot t-1 predicts x_t
  TensorT<S> last_hidden;  // [B, n, d] final-layer states
};

using DecoderOutput = DecoderOutputT<float>;

/// Autoregressive reconstruction decoder. The CLS vector h0 is injected
/// directly as the slot-0 hidden state; token slots carry embeddings of
/// x_1..x_{n-1}. There is no other pathway from the encoder.
template <class S>
DecoderOutputT<S> decoder_forward(TapeT<S>* tape, const ModelParamsT<S>& p,
                                  TensorT<S> h0,
                                  const std::vector<int32_t>& target_ids,
                                  int64_t B, int64_t n, bool train,
                                  uint64_t seed) {
  const ModelConfig& cfg = p.config;
  check<ShapeError>(h0.rank() == 2 && h0.dim(0) == B &&
                        h0.dim(1) == cfg.hidden_dim,
                    "decoder_forward: h0 shape ", shape_str(h0.shape()),
                    " incompatible with hidden_dim ", cfg.hidden_dim);
  check<ShapeError>(static_cast<int64_t>(target_ids.size()) == B * n,
                    "decoder_forward: target ids size mismatch");
  check<ShapeError>(n >= 1 && n <= cfg.max_seq_len,
                    "decoder_forward: target length ", n, " outside [1,",
                    cfg.max_seq_len, "]");

  const auto& tok_table =
      cfg.tie_decoder_embeddings ? p.at("emb.tok") : p.at("dec.tok");
  const auto& pos_table =
      cfg.tie_decoder_embeddings ? p.at("emb.pos") : p.at("dec.pos");

  DropoutStream drop{derive_seed(seed, 0xDEC0)};
  auto x = ops::reshape(tape, h0, {B, 1, cfg.hidden_dim});
  if (n > 1) {
    std::vector<int32_t> shifted(B * (n - 1));
    for (int64_t b = 0; b < B; ++b)
      for (int64_t j = 0; j + 1 < n; ++j)
        shifted[b * (n - 1) + j] = target_ids[b * n + j];
    auto emb = ops::embedding(tape, tok_table, shifted, {B, n - 1});
    x = ops::concat_seq(tape, x, emb);
  }
  x = ops::add_broadcast(tape, x, ops::slice_rows(tape, pos_table, 0, n));
  x = ops::dropout(tape, x, cfg.dropout, drop.next(), train);

  Mask window = build_decoder_mask(n - 1, cfg.decoder_span);
  window.shape = {1, 1, n, n};

  for (int32_t i = 0; i < cfg.num_dec_layers; ++i)
    x = detail::transformer_block(tape, p, strcat("dec.L", i), x, window,
                                  train, drop);

  auto flat = ops::reshape(tape, x, {B * n, cfg.hidden_dim});
  auto logits =
      ops::matmul_tied_vocab(tape, flat, tok_table, p.at("dec.out_bias"));
  logits = ops::reshape(tape, logits, {B, n, cfg.vocab_size});
  return {logits, x};
}

/// CLS embeddings for a batch of sequences, eval mode (no dropout).
template <class S>
TensorT<S> encode_cls(const ModelParamsT<S>& p,
                      const std::vector<int32_t>& input_ids,
                      const std::vector<uint8_t>& attention_valid, int64_t B,
                      int64_t L) {
  auto enc = encoder_forward<S>(nullptr, p, input_ids, attention_valid, B, L,
                                /*train=*/false, /*seed=*/0);
  std::vector<std::pair<int32_t, int32_t>> pos(B);
  for (int64_t b = 0; b < B; ++b) pos[b] = {static_cast<int32_t>(b), 0};
  return ops::gather_positions<S>(nullptr, enc.hidden, pos);
}

}  // namespace encore
