// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>

#include "effcrn/ops.hpp"

namespace effcrn {

namespace detail {

// scale = tanh(m)/m and its derivative-over-m helper u = s'(m)/m, evaluated
// in double with a series fallback so the m -> 0 limit (scale -> 1) is exact
// and finite.
inline void bounding_factors(double m, double& s, double& u) {
  if (m < 1e-3) {
    const double m2 = m * m;
    s = 1.0 - m2 / 3.0 + 2.0 * m2 * m2 / 15.0;
    u = -2.0 / 3.0 + 8.0 * m2 / 15.0;
    return;
  }
  const double th = std::tanh(m);
  s = th / m;
  const double sech2 = 1.0 - th * th;
  u = (sech2 * m - th) / (m * m * m);
}

}  // namespace detail

// Magnitude bounding of a complex mask held as (...,2): G' = tanh(|G|)/|G|*G.
// |G'| <= 1 for any input, the phase is preserved, and G = 0 maps to G' = 0.
template <typename T>
VarT<T> bound_mask(const VarT<T>& g_raw) {
  EFFCRN_CHECK(g_raw.value.rank() >= 1 &&
                   g_raw.value.dim(g_raw.value.rank() - 1) == 2,
               ShapeError, "mask tensor must end in a (Re,Im) axis of size 2");
  TensorT<T> y = TensorT<T>::uninitialized(g_raw.value.shape());
  const std::int64_t n = y.numel() / 2;
  const T* gd = g_raw.value.data();
  T* yd = y.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double a = double(gd[2 * i]), b = double(gd[2 * i + 1]);
    const double m = std::sqrt(a * a + b * b);
    double s, u;
    detail::bounding_factors(m, s, u);
    yd[2 * i] = T(a * s);
    yd[2 * i + 1] = T(b * s);
  }
  if (!g_raw.tracked()) return VarT<T>(std::move(y));
  const int gn = g_raw.node;
  const Shape shape = g_raw.value.shape();
  return g_raw.tape->record(
      std::move(y), [=, gv = g_raw.value](TapeT<T>& t, const TensorT<T>& g) {
        T* out = t.grad_mut(gn, shape).data();
        const T* gd2 = gv.data();
        const T* up = g.data();
        for (std::int64_t i = 0; i < n; ++i) {
          const double a = double(gd2[2 * i]), b = double(gd2[2 * i + 1]);
          const double m = std::sqrt(a * a + b * b);
          double s, u;
          detail::bounding_factors(m, s, u);
          const double gr = double(up[2 * i]), gi = double(up[2 * i + 1]);
          out[2 * i] += T(gr * (s + a * a * u) + gi * (a * b * u));
          out[2 * i + 1] += T(gr * (a * b * u) + gi * (s + b * b * u));
        }
      });
}

// Bounded masking of a noisy spectrum frame: bound first, then the complex
// product with Y.
template <typename T>
VarT<T> bound_and_apply_mask(const VarT<T>& g_raw, const VarT<T>& noisy) {
  return complex_mul(bound_mask(g_raw), noisy);
}

}  // namespace effcrn
