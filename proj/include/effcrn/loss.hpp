// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "effcrn/ops.hpp"

namespace effcrn {

template <typename T>
struct LossConfigT {
  T compression = T(0.3);  // c
  T blend = T(0.3);        // alpha, weight of the complex term
  T mag_floor = T(1e-12);  // magnitude floor before exponentiation
};

using LossConfig = LossConfigT<float>;

// Compressed magnitude + compressed complex spectral loss. Estimate and
// target are (F,L,2) or (B,F,L,2) spectra of non-redundant bins; the bin sum
// runs over the full DFT via conjugate-symmetry weights (interior bins count
// twice), normalized by batch, frame count, and DFT size.
template <typename T>
VarT<T> compressed_loss(const VarT<T>& estimate, const VarT<T>& target,
                        const LossConfigT<T>& cfg = {}) {
  EFFCRN_CHECK(same_shape(estimate.value, target.value), UsageError,
               "estimate " + shape_str(estimate.value.shape()) +
                   " vs target " + shape_str(target.value.shape()));
  EFFCRN_CHECK(cfg.compression > T(0) && cfg.compression <= T(1), ConfigError,
               "compression must be in (0,1]");
  EFFCRN_CHECK(cfg.blend >= T(0) && cfg.blend <= T(1), ConfigError,
               "blend must be in [0,1]");
  EFFCRN_CHECK(cfg.mag_floor > T(0), ConfigError, "magnitude floor must be > 0");
  TensorT<T> est4 = detail::as_bftc(estimate.value);
  EFFCRN_CHECK(est4.dim(3) == 2, UsageError, "spectra end in a (Re,Im) axis");
  const int B = est4.dim(0), Fq = est4.dim(1), L = est4.dim(2);
  const int dft = 2 * (Fq - 1);

  // conjugate-symmetry weights folded with the 1/(B*L*K) normalization
  TensorT<T> w = TensorT<T>::uninitialized({B, Fq, L, 1});
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < Fq; ++f) {
      const T sym = (f == 0 || f == Fq - 1) ? T(1) : T(2);
      const T v = sym / (T(B) * T(L) * T(dft));
      for (int l = 0; l < L; ++l)
        w.data()[((std::int64_t(b) * Fq + f) * L + l)] = v;
    }
  VarT<T> weights(w.reshaped(
      estimate.value.rank() == 4 ? Shape{B, Fq, L, 1} : Shape{Fq, L, 1}));

  const T floor_sq = cfg.mag_floor * cfg.mag_floor;
  auto compressed = [&](const VarT<T>& spec, VarT<T>& mag_pow, VarT<T>& cplx) {
    VarT<T> m = pow_const(max_with(complex_sq_mag(spec), floor_sq), T(0.5));
    mag_pow = pow_const(m, cfg.compression);
    cplx = scale_complex(spec, pow_const(m, cfg.compression - T(1)));
  };
  VarT<T> est_pow, est_cplx, tgt_pow, tgt_cplx;
  compressed(estimate, est_pow, est_cplx);
  compressed(target, tgt_pow, tgt_cplx);

  VarT<T> mag_term = sum_all(mul(weights, square(sub(est_pow, tgt_pow))));
  VarT<T> cplx_diff = complex_sq_mag(sub(est_cplx, tgt_cplx));
  VarT<T> cplx_term = sum_all(mul(weights, cplx_diff));
  return add(scale(mag_term, T(1) - cfg.blend), scale(cplx_term, cfg.blend));
}

}  // namespace effcrn
