#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "encore/common.hpp"
#include "encore/rng.hpp"

namespace encore {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense n-dimensional float tensor in row-major order, with an optional
/// same-shape gradient buffer. Handle semantics: copies share storage.
template <class S>
class TensorT {
 public:
  TensorT() : impl_(std::make_shared<Impl>()) {}

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    TensorT t;
    t.impl_->shape = std::move(shape);
    for (int64_t d : t.impl_->shape)
      check<ShapeError>(d >= 0, "tensor dimensions must be non-negative, got ",
                        shape_str(t.impl_->shape));
    t.impl_->value.assign(numel(t.impl_->shape), S(0));
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static TensorT from(Shape shape, std::vector<S> data,
                      bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    check<ShapeError>(static_cast<int64_t>(data.size()) == t.numel(),
                      "data length ", data.size(), " does not match shape ",
                      shape_str(t.shape()));
    t.impl_->value = std::move(data);
    return t;
  }

  static TensorT scalar(S v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static TensorT randn(Shape shape, Rng& rng, double stddev,
                       bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    for (S& x : t.impl_->value) x = static_cast<S>(rng.normal() * stddev);
    return t;
  }

  const Shape& shape() const { return impl_->shape; }
  int64_t dim(size_t i) const { return impl_->shape[i]; }
  size_t rank() const { return impl_->shape.size(); }
  int64_t numel() const { return static_cast<int64_t>(impl_->value.size()); }

  const std::vector<S>& data() const { return impl_->value; }
  std::vector<S>& data() { return impl_->value; }
  S item() const {
    check<ShapeError>(numel() == 1, "item() on non-scalar tensor ",
                      shape_str(shape()));
    return impl_->value[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<S>& grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), S(0));
    return impl_->grad;
  }
  const std::vector<S>& grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.assign(impl_->value.size(), S(0)); }
  void drop_grad() { impl_->grad.clear(); }

  /// Identity of the underlying storage; used by the tape to track nodes.
  const void* id() const { return impl_.get(); }

  bool all_finite() const {
    for (S x : impl_->value)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class T>
  TensorT<T> cast() const {
    auto out = TensorT<T>::zeros(shape(), requires_grad());
    for (int64_t i = 0; i < numel(); ++i)
      out.data()[i] = static_cast<T>(impl_->value[i]);
    return out;
  }

 private:
  struct Impl {
    Shape shape{1};
    std::vector<S> value{S(0)};
    std::vector<S> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

/// Boolean mask with limited broadcasting: dimensions of size 1 repeat.
struct Mask {
  Shape shape;
  std::vector<uint8_t> v;

  static Mask full(Shape shape, bool value) {
    Mask m;
    m.shape = std::move(shape);
    m.v.assign(numel(m.shape), value ? 1 : 0);
    return m;
  }

  uint8_t& at(int64_t flat) { return v[flat]; }
  bool at(int64_t flat) const { return v[flat] != 0; }
};

}  // namespace encore
