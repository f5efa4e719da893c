// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <vector>

#include "effcrn/tensor.hpp"

namespace effcrn {

template <typename T>
struct AdamConfigT {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

using AdamConfig = AdamConfigT<float>;

// Adam with bias-corrected moment estimates. Consumes ParameterT::grad;
// callers zero the gradients before the next backward pass.
template <typename T>
class AdamT {
 public:
  AdamT(std::vector<ParameterT<T>*> params, AdamConfigT<T> cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(TensorT<T>::zeros(p->value.shape()));
      v_.push_back(TensorT<T>::zeros(p->value.shape()));
    }
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, T(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, T(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      ParameterT<T>& p = *params_[i];
      T* m = m_[i].data();
      T* v = v_[i].data();
      T* w = p.value.data();
      const T* g = p.grad.data();
      for (std::int64_t j = 0; j < p.value.numel(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * g[j] * g[j];
        const T m_hat = m[j] / bc1;
        const T v_hat = v[j] / bc2;
        w[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      }
    }
  }

  void set_lr(T lr) { cfg_.lr = lr; }
  T lr() const { return cfg_.lr; }
  std::int64_t steps() const { return t_; }

 private:
  std::vector<ParameterT<T>*> params_;
  AdamConfigT<T> cfg_;
  std::vector<TensorT<T>> m_, v_;
  std::int64_t t_ = 0;
};

using Adam = AdamT<float>;

}  // namespace effcrn
