#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "encore/rng.hpp"
#include "encore/tape.hpp"
#include "encore/tensor.hpp"

namespace encore::ops {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapM = Eigen::Map<MatRM<S>>;
template <class S>
using CMapM = Eigen::Map<const MatRM<S>>;

namespace detail {

inline constexpr double kInvSqrt2 = 0.7071067811865475244;
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

template <class S>
bool track(TapeT<S>* tape, std::initializer_list<const TensorT<S>*> ins) {
  if (!tape) return false;
  for (const TensorT<S>* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

inline int64_t leading(const Shape& s) {
  int64_t n = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> add(TapeT<S>* tape, TensorT<S> a, TensorT<S> b) {
  check<ShapeError>(a.shape() == b.shape(), "add: shape mismatch ",
                    shape_str(a.shape()), " vs ", shape_str(b.shape()));
  auto out = TensorT<S>::zeros(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("add", {a.id(), b.id()}, out, [a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad())
        for (size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
      if (b.requires_grad())
        for (size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i];
    });
  }
  return out;
}

/// out[i..., j...] = x[i..., j...] + b[j...] where b's shape is a suffix of
/// x's shape (bias rows, position tables).
template <class S>
TensorT<S> add_broadcast(TapeT<S>* tape, TensorT<S> x, TensorT<S> b) {
  size_t rx = x.rank(), rb = b.rank();
  check<ShapeError>(rb <= rx, "add_broadcast: rank ", rb, " > ", rx);
  for (size_t i = 0; i < rb; ++i)
    check<ShapeError>(b.shape()[i] == x.shape()[rx - rb + i],
                      "add_broadcast: shape mismatch ", shape_str(x.shape()),
                      " vs ", shape_str(b.shape()));
  int64_t nb = b.numel();
  auto out = TensorT<S>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i)
    out.data()[i] = x.data()[i] + b.data()[i % nb];
  if (detail::track(tape, {&x, &b})) {
    out.set_requires_grad(true);
    tape->record("add_broadcast", {x.id(), b.id()}, out, [x, b, out, nb]() mutable {
      const auto& g = out.grad();
      if (x.requires_grad())
        for (size_t i = 0; i < g.size(); ++i) x.grad()[i] += g[i];
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> mul(TapeT<S>* tape, TensorT<S> a, TensorT<S> b) {
  check<ShapeError>(a.shape() == b.shape(), "mul: shape mismatch ",
                    shape_str(a.shape()), " vs ", shape_str(b.shape()));
  auto out = TensorT<S>::zeros(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("mul", {a.id(), b.id()}, out, [a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad())
        for (size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i] * b.data()[i];
      if (b.requires_grad())
        for (size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i] * a.data()[i];
    });
  }
  return out;
}

template <class S>
TensorT<S> scale(TapeT<S>* tape, TensorT<S> x, S c) {
  auto out = TensorT<S>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = x.data()[i] * c;
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("scale", {x.id()}, out, [x, out, c]() mutable {
      const auto& g = out.grad();
      for (size_t i = 0; i < g.size(); ++i) x.grad()[i] += g[i] * c;
    });
  }
  return out;
}

template <class S>
TensorT<S> gelu(TapeT<S>* tape, TensorT<S> x) {
  auto out = TensorT<S>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    double v = static_cast<double>(x.data()[i]);
    out.data()[i] =
        static_cast<S>(v * 0.5 * (1.0 + std::erf(v * detail::kInvSqrt2)));
  }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("gelu", {x.id()}, out, [x, out]() mutable {
      const auto& g = out.grad();
      for (size_t i = 0; i < g.size(); ++i) {
        double v = static_cast<double>(x.data()[i]);
        double cdf = 0.5 * (1.0 + std::erf(v * detail::kInvSqrt2));
        double pdf = detail::kInvSqrt2Pi * std::exp(-0.5 * v * v);
        x.grad()[i] += g[i] * static_cast<S>(cdf + v * pdf);
      }
    });
  }
  return out;
}

/// Inverted dropout; the kept mask is drawn from `seed` alone, so the forward
/// pass is reproducible. Identity when train is false or rate is 0.
template <class S>
TensorT<S> dropout(TapeT<S>* tape, TensorT<S> x, double rate, uint64_t seed,
                   bool train) {
  if (!train || rate <= 0.0) return x;
  check<NumericError>(rate < 1.0, "dropout: rate must be < 1, got ", rate);
  Rng rng(seed);
  auto keep = std::make_shared<std::vector<uint8_t>>(x.numel());
  S inv = static_cast<S>(1.0 / (1.0 - rate));
  auto out = TensorT<S>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    bool k = rng.uniform01() >= rate;
    (*keep)[i] = k;
    out.data()[i] = k ? x.data()[i] * inv : S(0);
  }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("dropout", {x.id()}, out, [x, out, keep, inv]() mutable {
      const auto& g = out.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if ((*keep)[i]) x.grad()[i] += g[i] * inv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape movement
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> reshape(TapeT<S>* tape, TensorT<S> x, Shape new_shape) {
  check<ShapeError>(numel(new_shape) == x.numel(), "reshape: ",
                    shape_str(x.shape()), " -> ", shape_str(new_shape),
                    " changes element count");
  auto out = TensorT<S>::from(std::move(new_shape), x.data());
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("reshape", {x.id()}, out, [x, out]() mutable {
      const auto& g = out.grad();
      for (size_t i = 0; i < g.size(); ++i) x.grad()[i] += g[i];
    });
  }
  return out;
}

/// rows [start, start+len) of a [R, C] matrix.
template <class S>
TensorT<S> slice_rows(TapeT<S>* tape, TensorT<S> x, int64_t start, int64_t len) {
  check<ShapeError>(x.rank() == 2, "slice_rows: expected rank-2, got ",
                    shape_str(x.shape()));
  int64_t rows = x.dim(0), cols = x.dim(1);
  check<ShapeError>(start >= 0 && len >= 1 && start + len <= rows,
                    "slice_rows: range [", start, ",", start + len,
                    ") out of bounds for ", shape_str(x.shape()));
  auto out = TensorT<S>::zeros({len, cols});
  std::copy(x.data().begin() + start * cols,
            x.data().begin() + (start + len) * cols, out.data().begin());
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("slice_rows", {x.id()}, out, [x, out, start, cols]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (size_t i = 0; i < g.size(); ++i) gx[start * cols + i] += g[i];
    });
  }
  return out;
}

/// [B, La, d] ++ [B, Lb, d] -> [B, La+Lb, d] along the sequence axis.
template <class S>
TensorT<S> concat_seq(TapeT<S>* tape, TensorT<S> a, TensorT<S> b) {
  check<ShapeError>(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) &&
                        a.dim(2) == b.dim(2),
                    "concat_seq: incompatible shapes ", shape_str(a.shape()),
                    " vs ", shape_str(b.shape()));
  int64_t B = a.dim(0), La = a.dim(1), Lb = b.dim(1), d = a.dim(2);
  auto out = TensorT<S>::zeros({B, La + Lb, d});
  for (int64_t i = 0; i < B; ++i) {
    std::copy(a.data().begin() + i * La * d, a.data().begin() + (i + 1) * La * d,
              out.data().begin() + i * (La + Lb) * d);
    std::copy(b.data().begin() + i * Lb * d, b.data().begin() + (i + 1) * Lb * d,
              out.data().begin() + i * (La + Lb) * d + La * d);
  }
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("concat_seq", {a.id(), b.id()}, out,
                 [a, b, out, B, La, Lb, d]() mutable {
                   const auto& g = out.grad();
                   for (int64_t i = 0; i < B; ++i) {
                     if (a.requires_grad()) {
                       auto& ga = a.grad();
                       for (int64_t j = 0; j < La * d; ++j)
                         ga[i * La * d + j] += g[i * (La + Lb) * d + j];
                     }
                     if (b.requires_grad()) {
                       auto& gb = b.grad();
                       for (int64_t j = 0; j < Lb * d; ++j)
                         gb[i * Lb * d + j] += g[i * (La + Lb) * d + La * d + j];
                     }
                   }
                 });
  }
  return out;
}

/// [B, L, D] -> [B, H, L, D/H]
template <class S>
TensorT<S> split_heads(TapeT<S>* tape, TensorT<S> x, int64_t heads) {
  check<ShapeError>(x.rank() == 3, "split_heads: expected [B,L,D], got ",
                    shape_str(x.shape()));
  int64_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
  check<ShapeError>(D % heads == 0, "split_heads: dim ", D,
                    " not divisible by ", heads, " heads");
  int64_t dh = D / heads;
  auto out = TensorT<S>::zeros({B, heads, L, dh});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t h = 0; h < heads; ++h)
        std::copy(x.data().begin() + ((b * L + l) * D + h * dh),
                  x.data().begin() + ((b * L + l) * D + (h + 1) * dh),
                  out.data().begin() + (((b * heads + h) * L + l) * dh));
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("split_heads", {x.id()}, out, [x, out, B, L, D, heads, dh]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l)
          for (int64_t h = 0; h < heads; ++h)
            for (int64_t j = 0; j < dh; ++j)
              gx[(b * L + l) * D + h * dh + j] +=
                  g[((b * heads + h) * L + l) * dh + j];
    });
  }
  return out;
}

/// [B, H, L, dh] -> [B, L, H*dh]
template <class S>
TensorT<S> merge_heads(TapeT<S>* tape, TensorT<S> x) {
  check<ShapeError>(x.rank() == 4, "merge_heads: expected [B,H,L,dh], got ",
                    shape_str(x.shape()));
  int64_t B = x.dim(0), H = x.dim(1), L = x.dim(2), dh = x.dim(3);
  int64_t D = H * dh;
  auto out = TensorT<S>::zeros({B, L, D});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t l = 0; l < L; ++l)
        std::copy(x.data().begin() + ((b * H + h) * L + l) * dh,
                  x.data().begin() + ((b * H + h) * L + l + 1) * dh,
                  out.data().begin() + (b * L + l) * D + h * dh);
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("merge_heads", {x.id()}, out, [x, out, B, H, L, dh, D]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t l = 0; l < L; ++l)
            for (int64_t j = 0; j < dh; ++j)
              gx[((b * H + h) * L + l) * dh + j] += g[(b * L + l) * D + h * dh + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// table lookups
// ---------------------------------------------------------------------------

/// Row gather: out[r, :] = table[ids[r], :], reshaped to ids_shape + [d].
template <class S>
TensorT<S> embedding(TapeT<S>* tape, TensorT<S> table,
                     const std::vector<int32_t>& ids, Shape ids_shape) {
  check<ShapeError>(table.rank() == 2, "embedding: table must be [V,d], got ",
                    shape_str(table.shape()));
  check<ShapeError>(numel(ids_shape) == static_cast<int64_t>(ids.size()),
                    "embedding: ids shape ", shape_str(ids_shape),
                    " does not match ", ids.size(), " ids");
  int64_t V = table.dim(0), d = table.dim(1);
  Shape out_shape = std::move(ids_shape);
  out_shape.push_back(d);
  auto out = TensorT<S>::zeros(out_shape);
  for (size_t r = 0; r < ids.size(); ++r) {
    int32_t id = ids[r];
    check<ShapeError>(id >= 0 && id < V, "embedding: id ", id,
                      " out of range [0,", V, ")");
    std::copy(table.data().begin() + id * d, table.data().begin() + (id + 1) * d,
              out.data().begin() + static_cast<int64_t>(r) * d);
  }
  if (detail::track(tape, {&table})) {
    out.set_requires_grad(true);
    auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
    tape->record("embedding", {table.id()}, out, [table, out, ids_copy, d]() mutable {
      const auto& g = out.grad();
      auto& gt = table.grad();
      for (size_t r = 0; r < ids_copy->size(); ++r) {
        int64_t row = (*ids_copy)[r];
        for (int64_t j = 0; j < d; ++j)
          gt[row * d + j] += g[static_cast<int64_t>(r) * d + j];
      }
    });
  }
  return out;
}

/// out[r, :] = x[b_r, l_r, :] for each requested (batch, position) pair.
template <class S>
TensorT<S> gather_positions(TapeT<S>* tape, TensorT<S> x,
                            const std::vector<std::pair<int32_t, int32_t>>& pos) {
  check<ShapeError>(x.rank() == 3, "gather_positions: expected [B,L,d], got ",
                    shape_str(x.shape()));
  int64_t B = x.dim(0), L = x.dim(1), d = x.dim(2);
  auto out = TensorT<S>::zeros({static_cast<int64_t>(pos.size()), d});
  for (size_t r = 0; r < pos.size(); ++r) {
    auto [b, l] = pos[r];
    check<ShapeError>(b >= 0 && b < B && l >= 0 && l < L,
                      "gather_positions: (", b, ",", l, ") out of bounds for ",
                      shape_str(x.shape()));
    std::copy(x.data().begin() + (b * L + l) * d,
              x.data().begin() + (b * L + l + 1) * d,
              out.data().begin() + static_cast<int64_t>(r) * d);
  }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    auto pos_copy = std::make_shared<std::vector<std::pair<int32_t, int32_t>>>(pos);
    tape->record("gather_positions", {x.id()}, out, [x, out, pos_copy, L, d]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (size_t r = 0; r < pos_copy->size(); ++r) {
        auto [b, l] = (*pos_copy)[r];
        for (int64_t j = 0; j < d; ++j)
          gx[(static_cast<int64_t>(b) * L + l) * d + j] +=
              g[static_cast<int64_t>(r) * d + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

/// Affine map over the last axis: out[..., j] = sum_k x[..., k] W[k, j] + b[j].
template <class S>
TensorT<S> linear(TapeT<S>* tape, TensorT<S> x, TensorT<S> W, TensorT<S> bias) {
  check<ShapeError>(W.rank() == 2, "linear: weight must be [d_in,d_out], got ",
                    shape_str(W.shape()));
  int64_t din = W.dim(0), dout = W.dim(1);
  check<ShapeError>(x.rank() >= 1 && x.shape().back() == din,
                    "linear: input ", shape_str(x.shape()),
                    " incompatible with weight ", shape_str(W.shape()));
  check<ShapeError>(bias.numel() == dout, "linear: bias ",
                    shape_str(bias.shape()), " incompatible with weight ",
                    shape_str(W.shape()));
  int64_t m = detail::leading(x.shape());
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  auto out = TensorT<S>::zeros(out_shape);
  if (m > 0) {
    CMapM<S> X(x.data().data(), m, din);
    CMapM<S> Wm(W.data().data(), din, dout);
    MapM<S> Y(out.data().data(), m, dout);
    Y.noalias() = X * Wm;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < dout; ++j) out.data()[i * dout + j] += bias.data()[j];
  }
  if (m > 0 && detail::track(tape, {&x, &W, &bias})) {
    out.set_requires_grad(true);
    tape->record("linear", {x.id(), W.id(), bias.id()}, out,
                 [x, W, bias, out, m, din, dout]() mutable {
                   CMapM<S> G(out.grad().data(), m, dout);
                   CMapM<S> X(x.data().data(), m, din);
                   CMapM<S> Wm(W.data().data(), din, dout);
                   if (x.requires_grad()) {
                     MapM<S> GX(x.grad().data(), m, din);
                     GX.noalias() += G * Wm.transpose();
                   }
                   if (W.requires_grad()) {
                     MapM<S> GW(W.grad().data(), din, dout);
                     GW.noalias() += X.transpose() * G;
                   }
                   if (bias.requires_grad()) {
                     auto& gb = bias.grad();
                     for (int64_t i = 0; i < m; ++i)
                       for (int64_t j = 0; j < dout; ++j)
                         gb[j] += out.grad()[i * dout + j];
                   }
                 });
  }
  return out;
}

/// Vocabulary projection against a [V, d] embedding table:
/// out[r, v] = sum_k x[r, k] table[v, k] + bias[v].
template <class S>
TensorT<S> matmul_tied_vocab(TapeT<S>* tape, TensorT<S> x, TensorT<S> table,
                             TensorT<S> bias) {
  check<ShapeError>(x.rank() == 2 && table.rank() == 2 &&
                        x.dim(1) == table.dim(1),
                    "matmul_tied_vocab: ", shape_str(x.shape()), " vs table ",
                    shape_str(table.shape()));
  int64_t m = x.dim(0), d = x.dim(1), V = table.dim(0);
  check<ShapeError>(bias.numel() == V, "matmul_tied_vocab: bias ",
                    shape_str(bias.shape()), " vs vocab ", V);
  auto out = TensorT<S>::zeros({m, V});
  if (m > 0) {
    CMapM<S> X(x.data().data(), m, d);
    CMapM<S> E(table.data().data(), V, d);
    MapM<S> Y(out.data().data(), m, V);
    Y.noalias() = X * E.transpose();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t v = 0; v < V; ++v) out.data()[i * V + v] += bias.data()[v];
  }
  if (m > 0 && detail::track(tape, {&x, &table, &bias})) {
    out.set_requires_grad(true);
    tape->record("matmul_tied_vocab", {x.id(), table.id(), bias.id()}, out,
                 [x, table, bias, out, m, d, V]() mutable {
                   CMapM<S> G(out.grad().data(), m, V);
                   CMapM<S> X(x.data().data(), m, d);
                   CMapM<S> E(table.data().data(), V, d);
                   if (x.requires_grad()) {
                     MapM<S> GX(x.grad().data(), m, d);
                     GX.noalias() += G * E;
                   }
                   if (table.requires_grad()) {
                     MapM<S> GE(table.grad().data(), V, d);
                     GE.noalias() += G.transpose() * X;
                   }
                   if (bias.requires_grad()) {
                     auto& gb = bias.grad();
                     for (int64_t i = 0; i < m; ++i)
                       for (int64_t v = 0; v < V; ++v) gb[v] += out.grad()[i * V + v];
                   }
                 });
  }
  return out;
}

/// Attention scores: out[b,h,i,j] = sum_k q[b,h,i,k] k_[b,h,j,k].
template <class S>
TensorT<S> matmul_qk(TapeT<S>* tape, TensorT<S> q, TensorT<S> k) {
  check<ShapeError>(q.rank() == 4 && k.rank() == 4 && q.dim(0) == k.dim(0) &&
                        q.dim(1) == k.dim(1) && q.dim(3) == k.dim(3),
                    "matmul_qk: ", shape_str(q.shape()), " vs ",
                    shape_str(k.shape()));
  int64_t B = q.dim(0), H = q.dim(1), L = q.dim(2), M = k.dim(2), dh = q.dim(3);
  auto out = TensorT<S>::zeros({B, H, L, M});
  for (int64_t s = 0; s < B * H; ++s) {
    CMapM<S> Q(q.data().data() + s * L * dh, L, dh);
    CMapM<S> K(k.data().data() + s * M * dh, M, dh);
    MapM<S> Y(out.data().data() + s * L * M, L, M);
    Y.noalias() = Q * K.transpose();
  }
  if (detail::track(tape, {&q, &k})) {
    out.set_requires_grad(true);
    tape->record("matmul_qk", {q.id(), k.id()}, out,
                 [q, k, out, B, H, L, M, dh]() mutable {
                   for (int64_t s = 0; s < B * H; ++s) {
                     CMapM<S> G(out.grad().data() + s * L * M, L, M);
                     CMapM<S> Q(q.data().data() + s * L * dh, L, dh);
                     CMapM<S> K(k.data().data() + s * M * dh, M, dh);
                     if (q.requires_grad()) {
                       MapM<S> GQ(q.grad().data() + s * L * dh, L, dh);
                       GQ.noalias() += G * K;
                     }
                     if (k.requires_grad()) {
                       MapM<S> GK(k.grad().data() + s * M * dh, M, dh);
                       GK.noalias() += G.transpose() * Q;
                     }
                   }
                 });
  }
  return out;
}

/// Attention context: out[b,h,i,k] = sum_j p[b,h,i,j] v[b,h,j,k].
template <class S>
TensorT<S> matmul_pv(TapeT<S>* tape, TensorT<S> p, TensorT<S> v) {
  check<ShapeError>(p.rank() == 4 && v.rank() == 4 && p.dim(0) == v.dim(0) &&
                        p.dim(1) == v.dim(1) && p.dim(3) == v.dim(2),
                    "matmul_pv: ", shape_str(p.shape()), " vs ",
                    shape_str(v.shape()));
  int64_t B = p.dim(0), H = p.dim(1), L = p.dim(2), M = p.dim(3), dh = v.dim(3);
  auto out = TensorT<S>::zeros({B, H, L, dh});
  for (int64_t s = 0; s < B * H; ++s) {
    CMapM<S> P(p.data().data() + s * L * M, L, M);
    CMapM<S> V(v.data().data() + s * M * dh, M, dh);
    MapM<S> Y(out.data().data() + s * L * dh, L, dh);
    Y.noalias() = P * V;
  }
  if (detail::track(tape, {&p, &v})) {
    out.set_requires_grad(true);
    tape->record("matmul_pv", {p.id(), v.id()}, out,
                 [p, v, out, B, H, L, M, dh]() mutable {
                   for (int64_t s = 0; s < B * H; ++s) {
                     CMapM<S> G(out.grad().data() + s * L * dh, L, dh);
                     CMapM<S> P(p.data().data() + s * L * M, L, M);
                     CMapM<S> V(v.data().data() + s * M * dh, M, dh);
                     if (p.requires_grad()) {
                       MapM<S> GP(p.grad().data() + s * L * M, L, M);
                       GP.noalias() += G * V.transpose();
                     }
                     if (v.requires_grad()) {
                       MapM<S> GV(v.grad().data() + s * M * dh, M, dh);
                       GV.noalias() += P.transpose() * G;
                     }
                   }
                 });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization and losses
// ---------------------------------------------------------------------------

/// Row-wise masked softmax over the last axis. Masked positions get exactly 0;
/// each unmasked row normalizes to 1. The mask broadcasts over dimensions of
/// size 1 (e.g. a [B,1,L,L] key mask against [B,H,L,L] scores).
template <class S>
TensorT<S> softmax_masked(TapeT<S>* tape, TensorT<S> logits, const Mask& mask) {
  check<ShapeError>(mask.shape.size() == logits.rank(),
                    "softmax_masked: mask rank ", mask.shape.size(),
                    " != logits rank ", logits.rank());
  size_t r = logits.rank();
  for (size_t i = 0; i < r; ++i)
    check<ShapeError>(mask.shape[i] == logits.shape()[i] || mask.shape[i] == 1,
                      "softmax_masked: mask ", shape_str(mask.shape),
                      " does not broadcast to ", shape_str(logits.shape()));
  int64_t n = logits.shape().back();
  int64_t rows = logits.numel() / n;

  // row -> flat offset in the (possibly broadcast) mask
  std::vector<int64_t> mask_stride(r);
  int64_t acc = 1;
  for (size_t i = r; i-- > 0;) {
    mask_stride[i] = (mask.shape[i] == 1) ? 0 : acc;
    acc *= mask.shape[i];
  }
  auto mask_offset = [&](int64_t row) {
    int64_t rem = row, off = 0;
    for (size_t i = r - 1; i-- > 0;) {
      int64_t idx = rem % logits.shape()[i];
      rem /= logits.shape()[i];
      off += idx * mask_stride[i];
    }
    return off;
  };
  int64_t last_stride = mask_stride[r - 1];

  auto out = TensorT<S>::zeros(logits.shape());
  for (int64_t row = 0; row < rows; ++row) {
    const S* lp = logits.data().data() + row * n;
    S* op = out.data().data() + row * n;
    int64_t moff = mask_offset(row);
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j)
      if (mask.at(moff + j * last_stride)) mx = std::max(mx, static_cast<double>(lp[j]));
    check<NumericError>(std::isfinite(mx),
                        "softmax_masked: fully masked row ", row);
    double z = 0;
    for (int64_t j = 0; j < n; ++j) {
      if (mask.at(moff + j * last_stride)) {
        double e = std::exp(static_cast<double>(lp[j]) - mx);
        op[j] = static_cast<S>(e);
        z += e;
      } else {
        op[j] = S(0);
      }
    }
    S inv = static_cast<S>(1.0 / z);
    for (int64_t j = 0; j < n; ++j) op[j] *= inv;
  }
  if (detail::track(tape, {&logits})) {
    out.set_requires_grad(true);
    tape->record("softmax_masked", {logits.id()}, out, [logits, out, rows, n]() mutable {
      const auto& g = out.grad();
      auto& gl = logits.grad();
      for (int64_t row = 0; row < rows; ++row) {
        const S* p = out.data().data() + row * n;
        const S* gr = g.data() + row * n;
        double dot = 0;
        for (int64_t j = 0; j < n; ++j) dot += static_cast<double>(p[j]) * gr[j];
        for (int64_t j = 0; j < n; ++j)
          gl[row * n + j] += p[j] * (gr[j] - static_cast<S>(dot));
      }
    });
  }
  return out;
}

/// out = (x - mean)/sqrt(var + eps) * gamma + beta over the last axis,
/// with population variance.
template <class S>
TensorT<S> layer_norm(TapeT<S>* tape, TensorT<S> x, TensorT<S> gamma,
                      TensorT<S> beta, double eps) {
  int64_t d = x.shape().back();
  check<ShapeError>(gamma.numel() == d && beta.numel() == d,
                    "layer_norm: gamma/beta ", shape_str(gamma.shape()), "/",
                    shape_str(beta.shape()), " vs feature dim ", d);
  int64_t rows = x.numel() / d;
  auto out = TensorT<S>::zeros(x.shape());
  auto inv_std = std::make_shared<std::vector<S>>(rows);
  auto xhat = std::make_shared<std::vector<S>>(x.numel());
  for (int64_t row = 0; row < rows; ++row) {
    const S* xp = x.data().data() + row * d;
    double mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += xp[j];
    mean /= d;
    double var = 0;
    for (int64_t j = 0; j < d; ++j) {
      double c = xp[j] - mean;
      var += c * c;
    }
    var /= d;
    double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[row] = static_cast<S>(istd);
    for (int64_t j = 0; j < d; ++j) {
      S h = static_cast<S>((xp[j] - mean) * istd);
      (*xhat)[row * d + j] = h;
      out.data()[row * d + j] = h * gamma.data()[j] + beta.data()[j];
    }
  }
  if (detail::track(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record("layer_norm", {x.id(), gamma.id(), beta.id()}, out,
                 [x, gamma, beta, out, inv_std, xhat, rows, d]() mutable {
                   const auto& g = out.grad();
                   for (int64_t row = 0; row < rows; ++row) {
                     const S* gr = g.data() + row * d;
                     const S* h = xhat->data() + row * d;
                     if (gamma.requires_grad() || beta.requires_grad()) {
                       auto& gg = gamma.grad();
                       auto& gb = beta.grad();
                       for (int64_t j = 0; j < d; ++j) {
                         gg[j] += gr[j] * h[j];
                         gb[j] += gr[j];
                       }
                     }
                     if (x.requires_grad()) {
                       double sum_gy = 0, sum_gyh = 0;
                       for (int64_t j = 0; j < d; ++j) {
                         double gy = static_cast<double>(gr[j]) * gamma.data()[j];
                         sum_gy += gy;
                         sum_gyh += gy * h[j];
                       }
                       double istd = (*inv_std)[row];
                       auto& gx = x.grad();
                       for (int64_t j = 0; j < d; ++j) {
                         double gy = static_cast<double>(gr[j]) * gamma.data()[j];
                         gx[row * d + j] += static_cast<S>(
                             istd * (gy - sum_gy / d - h[j] * sum_gyh / d));
                       }
                     }
                   }
                 });
  }
  return out;
}

/// Mean negative log-likelihood over rows whose target is not ignore_index.
/// Log-sum-exp runs in double regardless of S.
template <class S>
TensorT<S> cross_entropy_from_logits(TapeT<S>* tape, TensorT<S> logits,
                                     const std::vector<int32_t>& targets,
                                     int32_t ignore_index = -100) {
  check<ShapeError>(logits.rank() == 2, "cross_entropy: logits must be [m,V], got ",
                    shape_str(logits.shape()));
  int64_t m = logits.dim(0), V = logits.dim(1);
  check<ShapeError>(static_cast<int64_t>(targets.size()) == m,
                    "cross_entropy: ", targets.size(), " targets for ", m, " rows");
  int64_t live = 0;
  double loss = 0;
  for (int64_t i = 0; i < m; ++i) {
    int32_t t = targets[i];
    if (t == ignore_index) continue;
    check<ShapeError>(t >= 0 && t < V, "cross_entropy: target ", t,
                      " out of range [0,", V, ")");
    const S* lp = logits.data().data() + i * V;
    double mx = lp[0];
    for (int64_t v = 1; v < V; ++v) mx = std::max(mx, static_cast<double>(lp[v]));
    double z = 0;
    for (int64_t v = 0; v < V; ++v) z += std::exp(static_cast<double>(lp[v]) - mx);
    loss += std::log(z) + mx - static_cast<double>(lp[t]);
    ++live;
  }
  check<NumericError>(live > 0, "cross_entropy: all ", m, " targets ignored");
  auto out = TensorT<S>::scalar(static_cast<S>(loss / live));
  if (detail::track(tape, {&logits})) {
    out.set_requires_grad(true);
    auto tgt = std::make_shared<std::vector<int32_t>>(targets);
    tape->record("cross_entropy", {logits.id()}, out,
                 [logits, out, tgt, m, V, live, ignore_index]() mutable {
                   S gscale = out.grad()[0] / static_cast<S>(live);
                   auto& gl = logits.grad();
                   for (int64_t i = 0; i < m; ++i) {
                     int32_t t = (*tgt)[i];
                     if (t == ignore_index) continue;
                     const S* lp = logits.data().data() + i * V;
                     double mx = lp[0];
                     for (int64_t v = 1; v < V; ++v)
                       mx = std::max(mx, static_cast<double>(lp[v]));
                     double z = 0;
                     for (int64_t v = 0; v < V; ++v)
                       z += std::exp(static_cast<double>(lp[v]) - mx);
                     for (int64_t v = 0; v < V; ++v) {
                       double p = std::exp(static_cast<double>(lp[v]) - mx) / z;
                       double delta = (v == t) ? 1.0 : 0.0;
                       gl[i * V + v] += gscale * static_cast<S>(p - delta);
                     }
                   }
                 });
  }
  return out;
}

template <class S>
TensorT<S> sum(TapeT<S>* tape, TensorT<S> x) {
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  auto out = TensorT<S>::scalar(static_cast<S>(acc));
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("sum", {x.id()}, out, [x, out]() mutable {
      S g = out.grad()[0];
      for (int64_t i = 0; i < x.numel(); ++i) x.grad()[i] += g;
    });
  }
  return out;
}

/// Softmax cross-entropy over in-batch dot-product scores; row i's positive
/// is document i. Requires batch size >= 2.
template <class S>
TensorT<S> in_batch_loss(TapeT<S>* tape, TensorT<S> q, TensorT<S> doc) {
  check<ShapeError>(q.rank() == 2 && q.shape() == doc.shape(),
                    "in_batch_loss: ", shape_str(q.shape()), " vs ",
                    shape_str(doc.shape()));
  int64_t B = q.dim(0), d = q.dim(1);
  check<NumericError>(B >= 2, "in_batch_loss: degenerate batch of size ", B);
  std::vector<double> scores(B * B);
  {
    CMapM<S> Q(q.data().data(), B, d);
    CMapM<S> D(doc.data().data(), B, d);
    MatRM<S> Z = Q * D.transpose();
    for (int64_t i = 0; i < B * B; ++i) scores[i] = Z.data()[i];
  }
  auto probs = std::make_shared<std::vector<double>>(B * B);
  double loss = 0;
  for (int64_t i = 0; i < B; ++i) {
    double mx = scores[i * B];
    for (int64_t j = 1; j < B; ++j) mx = std::max(mx, scores[i * B + j]);
    double z = 0;
    for (int64_t j = 0; j < B; ++j) {
      double e = std::exp(scores[i * B + j] - mx);
      (*probs)[i * B + j] = e;
      z += e;
    }
    for (int64_t j = 0; j < B; ++j) (*probs)[i * B + j] /= z;
    loss -= std::log((*probs)[i * B + i]);
  }
  auto out = TensorT<S>::scalar(static_cast<S>(loss / B));
  if (detail::track(tape, {&q, &doc})) {
    out.set_requires_grad(true);
    tape->record("in_batch_loss", {q.id(), doc.id()}, out,
                 [q, doc, out, probs, B, d]() mutable {
                   double gscale = out.grad()[0] / static_cast<double>(B);
                   MatRM<S> GZ(B, B);
                   for (int64_t i = 0; i < B; ++i)
                     for (int64_t j = 0; j < B; ++j)
                       GZ(i, j) = static_cast<S>(
                           gscale * ((*probs)[i * B + j] - (i == j ? 1.0 : 0.0)));
                   CMapM<S> Q(q.data().data(), B, d);
                   CMapM<S> D(doc.data().data(), B, d);
                   if (q.requires_grad()) {
                     MapM<S> GQ(q.grad().data(), B, d);
                     GQ.noalias() += GZ * D;
                   }
                   if (doc.requires_grad()) {
                     MapM<S> GD(doc.grad().data(), B, d);
                     GD.noalias() += GZ.transpose() * Q;
                   }
                 });
  }
  return out;
}

/// Mean over rows of relu(margin - (q.dpos - q.dneg)) with dot-product scores.
template <class S>
TensorT<S> triplet_dot_loss(TapeT<S>* tape, TensorT<S> q, TensorT<S> dpos,
                            TensorT<S> dneg, double margin = 1.0) {
  check<ShapeError>(q.rank() == 2 && q.shape() == dpos.shape() &&
                        q.shape() == dneg.shape(),
                    "triplet_dot_loss: shapes ", shape_str(q.shape()), ", ",
                    shape_str(dpos.shape()), ", ", shape_str(dneg.shape()));
  int64_t B = q.dim(0), d = q.dim(1);
  auto active = std::make_shared<std::vector<uint8_t>>(B);
  double loss = 0;
  for (int64_t i = 0; i < B; ++i) {
    double sp = 0, sn = 0;
    for (int64_t j = 0; j < d; ++j) {
      sp += static_cast<double>(q.data()[i * d + j]) * dpos.data()[i * d + j];
      sn += static_cast<double>(q.data()[i * d + j]) * dneg.data()[i * d + j];
    }
    double v = margin - (sp - sn);
    (*active)[i] = v > 0;
    if (v > 0) loss += v;
  }
  auto out = TensorT<S>::scalar(static_cast<S>(loss / B));
  if (detail::track(tape, {&q, &dpos, &dneg})) {
    out.set_requires_grad(true);
    tape->record("triplet_dot_loss", {q.id(), dpos.id(), dneg.id()}, out,
                 [q, dpos, dneg, out, active, B, d]() mutable {
                   S gscale = out.grad()[0] / static_cast<S>(B);
                   for (int64_t i = 0; i < B; ++i) {
                     if (!(*active)[i]) continue;
                     for (int64_t j = 0; j < d; ++j) {
                       if (q.requires_grad())
                         q.grad()[i * d + j] +=
                             gscale * (dneg.data()[i * d + j] - dpos.data()[i * d + j]);
                       if (dpos.requires_grad())
                         dpos.grad()[i * d + j] += -gscale * q.data()[i * d + j];
                       if (dneg.requires_grad())
                         dneg.grad()[i * d + j] += gscale * q.data()[i * d + j];
                     }
                   }
                 });
  }
  return out;
}

}  // namespace encore::ops
