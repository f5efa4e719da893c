// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "effcrn/error.hpp"

namespace effcrn {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Dense row-major tensor. Copies share the underlying buffer; tensors are
// treated as immutable once handed to an operation. Model data is laid out
// as (freq, time, channels) or (batch, freq, time, channels) with channels
// contiguous.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape) {
    TensorT t = uninitialized(std::move(shape));
    std::fill(t.data(), t.data() + t.numel(), T(0));
    return t;
  }

  static TensorT full(Shape shape, T value) {
    TensorT t = uninitialized(std::move(shape));
    std::fill(t.data(), t.data() + t.numel(), value);
    return t;
  }

  static TensorT from_vector(Shape shape, const std::vector<T>& values) {
    TensorT t = uninitialized(std::move(shape));
    EFFCRN_CHECK(static_cast<std::int64_t>(values.size()) == t.numel(),
                 ShapeError,
                 "value count " + std::to_string(values.size()) +
                     " does not fill " + shape_str(t.shape()));
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  static TensorT scalar(T value) { return full({1}, value); }

  // Uniform in [-limit, limit].
  static TensorT uniform(Shape shape, T limit, std::mt19937& rng) {
    TensorT t = uninitialized(std::move(shape));
    std::uniform_real_distribution<double> dist(-double(limit), double(limit));
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = T(dist(rng));
    return t;
  }

  static TensorT uninitialized(Shape shape) {
    for (int d : shape)
      EFFCRN_CHECK(d >= 1, ShapeError,
                   "dimension must be >= 1, got " + shape_str(shape));
    EFFCRN_CHECK(!shape.empty(), ShapeError, "rank-0 tensors not supported");
    TensorT t;
    t.shape_ = std::move(shape);
    t.numel_ = shape_numel(t.shape_);
    t.data_ = std::shared_ptr<T[]>(new T[t.numel_]);
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  std::int64_t numel() const { return numel_; }

  const T* data() const { return data_.get(); }
  T* data() { return data_.get(); }

  T operator[](std::int64_t i) const { return data_.get()[i]; }

  // Same buffer, new shape.
  TensorT reshaped(Shape shape) const {
    EFFCRN_CHECK(shape_numel(shape) == numel_, ShapeError,
                 "reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    TensorT t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  TensorT clone() const {
    TensorT t = uninitialized(shape_);
    std::copy(data(), data() + numel_, t.data());
    return t;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> t = TensorT<U>::uninitialized(shape_);
    for (std::int64_t i = 0; i < numel_; ++i) t.data()[i] = U(data()[i]);
    return t;
  }

 private:
  Shape shape_;
  std::int64_t numel_ = 0;
  std::shared_ptr<T[]> data_;
};

using Tensor = TensorT<float>;

template <typename T>
bool same_shape(const TensorT<T>& a, const TensorT<T>& b) {
  return a.shape() == b.shape();
}

// Trainable tensor with a persistent gradient accumulator.
template <typename T>
struct ParameterT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(TensorT<T>::zeros(value.shape())) {}

  void zero_grad() {
    std::fill(grad.data(), grad.data() + grad.numel(), T(0));
  }
};

using Parameter = ParameterT<float>;

}  // namespace effcrn
