// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "effcrn/tape.hpp"
#include "effcrn/tensor.hpp"

namespace effcrn {

enum class PadMode { none, same };
enum class Activation { linear, leaky_relu, tanh, sigmoid };

namespace detail {

struct ConvGeom {
  int in_f = 0, out_f = 0, ksize = 0, stride = 0, pad_lo = 0, pad_hi = 0;
};

// Same-padding puts the extra zero on the high-frequency side when the total
// pad is odd.
inline ConvGeom conv_geometry(int in_f, int ksize, int stride, PadMode pad) {
  EFFCRN_CHECK(stride >= 1, ConfigError, "stride must be >= 1");
  ConvGeom g;
  g.in_f = in_f;
  g.ksize = ksize;
  g.stride = stride;
  if (pad == PadMode::same) {
    g.out_f = (in_f + stride - 1) / stride;
    int total = std::max((g.out_f - 1) * stride + ksize - in_f, 0);
    g.pad_lo = total / 2;
    g.pad_hi = total - g.pad_lo;
  } else {
    EFFCRN_CHECK(in_f >= ksize, ShapeError,
                 "unpadded input smaller than kernel");
    g.out_f = (in_f - ksize) / stride + 1;
  }
  return g;
}

// View helper: model tensors are (F,T,C) or (B,F,T,C); kernels below always
// iterate the rank-4 form.
template <typename T>
inline TensorT<T> as_bftc(const TensorT<T>& x) {
  if (x.rank() == 4) return x;
  EFFCRN_CHECK(x.rank() == 3, ShapeError,
               "expected (F,T,C) or (B,F,T,C), got " + shape_str(x.shape()));
  return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
}

template <typename T>
void conv2d_forward(const TensorT<T>& x, const TensorT<T>& k, const T* bias,
                    const ConvGeom& g, TensorT<T>& y) {
  const int B = x.dim(0), Fi = x.dim(1), Tt = x.dim(2), Ci = x.dim(3);
  const int Fo = y.dim(1), Co = y.dim(3), N = g.ksize;
  const T* xd = x.data();
  const T* kd = k.data();
  T* yd = y.data();
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < Fo; ++j)
      for (int t = 0; t < Tt; ++t) {
        T* __restrict acc = yd + ((std::int64_t(b) * Fo + j) * Tt + t) * Co;
        if (bias)
          std::copy(bias, bias + Co, acc);
        else
          std::fill(acc, acc + Co, T(0));
        const int i0 = j * g.stride - g.pad_lo;
        const int n_lo = std::max(0, -i0);
        const int n_hi = std::min(N, Fi - i0);
        for (int n = n_lo; n < n_hi; ++n) {
          const T* __restrict xr =
              xd + ((std::int64_t(b) * Fi + (i0 + n)) * Tt + t) * Ci;
          const T* kr = kd + std::int64_t(n) * Ci * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const T v = xr[ci];
            const T* __restrict w = kr + std::int64_t(ci) * Co;
            for (int co = 0; co < Co; ++co) acc[co] += v * w[co];
          }
        }
      }
}

// Kernel reindexed as (N, Co, Ci) so the accumulation loops below run over
// contiguous memory and vectorize without reassociation.
template <typename T>
TensorT<T> transpose_kernel_channels(const TensorT<T>& k) {
  const int N = k.dim(0), A = k.dim(2), B2 = k.dim(3);
  TensorT<T> kt = TensorT<T>::uninitialized({N, 1, B2, A});
  for (int n = 0; n < N; ++n)
    for (int a = 0; a < A; ++a)
      for (int b = 0; b < B2; ++b)
        kt.data()[(std::int64_t(n) * B2 + b) * A + a] =
            k.data()[(std::int64_t(n) * A + a) * B2 + b];
  return kt;
}

template <typename T>
void conv2d_backward_input(TensorT<T>& gx, const TensorT<T>& k,
                           const TensorT<T>& gy, const ConvGeom& g) {
  const int B = gx.dim(0), Fi = gx.dim(1), Tt = gx.dim(2), Ci = gx.dim(3);
  const int Fo = gy.dim(1), Co = gy.dim(3), N = g.ksize;
  const TensorT<T> kt = transpose_kernel_channels(k);  // (N, Co, Ci)
  T* gxd = gx.data();
  const T* kd = kt.data();
  const T* gyd = gy.data();
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < Fo; ++j)
      for (int t = 0; t < Tt; ++t) {
        const T* gyr = gyd + ((std::int64_t(b) * Fo + j) * Tt + t) * Co;
        const int i0 = j * g.stride - g.pad_lo;
        const int n_lo = std::max(0, -i0);
        const int n_hi = std::min(N, Fi - i0);
        for (int n = n_lo; n < n_hi; ++n) {
          T* __restrict gxr =
              gxd + ((std::int64_t(b) * Fi + (i0 + n)) * Tt + t) * Ci;
          const T* kr = kd + std::int64_t(n) * Ci * Co;
          for (int co = 0; co < Co; ++co) {
            const T v = gyr[co];
            const T* __restrict w = kr + std::int64_t(co) * Ci;
            for (int ci = 0; ci < Ci; ++ci) gxr[ci] += v * w[ci];
          }
        }
      }
}

template <typename T>
void conv2d_backward_kernel(TensorT<T>& gk, const TensorT<T>& x,
                            const TensorT<T>& gy, const ConvGeom& g) {
  const int B = x.dim(0), Fi = x.dim(1), Tt = x.dim(2), Ci = x.dim(3);
  const int Fo = gy.dim(1), Co = gy.dim(3), N = g.ksize;
  const T* xd = x.data();
  T* gkd = gk.data();
  const T* gyd = gy.data();
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < Fo; ++j)
      for (int t = 0; t < Tt; ++t) {
        const T* gyr = gyd + ((std::int64_t(b) * Fo + j) * Tt + t) * Co;
        const int i0 = j * g.stride - g.pad_lo;
        const int n_lo = std::max(0, -i0);
        const int n_hi = std::min(N, Fi - i0);
        for (int n = n_lo; n < n_hi; ++n) {
          const T* xr = xd + ((std::int64_t(b) * Fi + (i0 + n)) * Tt + t) * Ci;
          T* gkr = gkd + std::int64_t(n) * Ci * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const T v = xr[ci];
            T* gw = gkr + std::int64_t(ci) * Co;
            for (int co = 0; co < Co; ++co) gw[co] += v * gyr[co];
          }
        }
      }
}

template <typename T>
void reduce_to_channels(TensorT<T>& gb, const TensorT<T>& gy) {
  const int Co = gy.dim(3);
  const std::int64_t rows = gy.numel() / Co;
  const T* gyd = gy.data();
  T* gbd = gb.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = gyd + r * Co;
    for (int co = 0; co < Co; ++co) gbd[co] += row[co];
  }
}

template <typename T>
void deconv_forward(const TensorT<T>& x, const TensorT<T>& k, const T* bias,
                    int stride, int crop_lo, TensorT<T>& y) {
  const int B = x.dim(0), Fi = x.dim(1), Tt = x.dim(2), Ci = x.dim(3);
  const int Fo = y.dim(1), Co = y.dim(3);
  const int N = k.dim(0);
  const TensorT<T> kt = transpose_kernel_channels(k);  // (N, Ci, Co)
  const T* xd = x.data();
  const T* kd = kt.data();
  T* yd = y.data();
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < Tt; ++t) {
      for (int o = 0; o < Fo; ++o) {
        T* row = yd + ((std::int64_t(b) * Fo + o) * Tt + t) * Co;
        if (bias)
          std::copy(bias, bias + Co, row);
        else
          std::fill(row, row + Co, T(0));
      }
      for (int j = 0; j < Fi; ++j) {
        const T* xr = xd + ((std::int64_t(b) * Fi + j) * Tt + t) * Ci;
        for (int n = 0; n < N; ++n) {
          const int o = j * stride + n - crop_lo;
          if (o < 0 || o >= Fo) continue;
          T* __restrict yr = yd + ((std::int64_t(b) * Fo + o) * Tt + t) * Co;
          const T* kr = kd + std::int64_t(n) * Ci * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const T v = xr[ci];
            const T* __restrict w = kr + std::int64_t(ci) * Co;
            for (int co = 0; co < Co; ++co) yr[co] += v * w[co];
          }
        }
      }
    }
}

template <typename T>
void deconv_backward_input(TensorT<T>& gx, const TensorT<T>& k,
                           const TensorT<T>& gy, int stride, int crop_lo) {
  const int B = gx.dim(0), Fi = gx.dim(1), Tt = gx.dim(2), Ci = gx.dim(3);
  const int Fo = gy.dim(1), Co = gy.dim(3);
  const int N = k.dim(0);
  T* gxd = gx.data();
  const T* kd = k.data();
  const T* gyd = gy.data();
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < Tt; ++t)
      for (int j = 0; j < Fi; ++j) {
        T* gxr = gxd + ((std::int64_t(b) * Fi + j) * Tt + t) * Ci;
        for (int n = 0; n < N; ++n) {
          const int o = j * stride + n - crop_lo;
          if (o < 0 || o >= Fo) continue;
          const T* gyr = gyd + ((std::int64_t(b) * Fo + o) * Tt + t) * Co;
          const T* kr = kd + std::int64_t(n) * Co * Ci;
          for (int co = 0; co < Co; ++co) {
            const T v = gyr[co];
            const T* w = kr + std::int64_t(co) * Ci;
            for (int ci = 0; ci < Ci; ++ci) gxr[ci] += v * w[ci];
          }
        }
      }
}

template <typename T>
void deconv_backward_kernel(TensorT<T>& gk, const TensorT<T>& x,
                            const TensorT<T>& gy, int stride, int crop_lo) {
  const int B = x.dim(0), Fi = x.dim(1), Tt = x.dim(2), Ci = x.dim(3);
  const int Fo = gy.dim(1), Co = gy.dim(3);
  const int N = gk.dim(0);
  const T* xd = x.data();
  T* gkd = gk.data();
  const T* gyd = gy.data();
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < Tt; ++t)
      for (int j = 0; j < Fi; ++j) {
        const T* xr = xd + ((std::int64_t(b) * Fi + j) * Tt + t) * Ci;
        for (int n = 0; n < N; ++n) {
          const int o = j * stride + n - crop_lo;
          if (o < 0 || o >= Fo) continue;
          const T* gyr = gyd + ((std::int64_t(b) * Fo + o) * Tt + t) * Co;
          T* gkr = gkd + std::int64_t(n) * Co * Ci;
          for (int co = 0; co < Co; ++co) {
            const T v = gyr[co];
            T* gw = gkr + std::int64_t(co) * Ci;
            for (int ci = 0; ci < Ci; ++ci) gw[ci] += v * xr[ci];
          }
        }
      }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Strided convolution along the frequency axis. Kernel is (N, 1, C_in, C_out),
// bias (C_out). Input (F,T,C_in) or (B,F,T,C_in); V=1, so time positions are
// independent.
template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& kernel, const VarT<T>& bias,
               int stride, PadMode pad) {
  TensorT<T> x4 = detail::as_bftc(x.value);
  EFFCRN_CHECK(kernel.value.rank() == 4 && kernel.value.dim(1) == 1, ShapeError,
               "conv kernel must be (N,1,C_in,C_out)");
  const int N = kernel.value.dim(0);
  const int Cin = kernel.value.dim(2);
  const int Cout = kernel.value.dim(3);
  EFFCRN_CHECK(x4.dim(3) == Cin, ShapeError,
               "conv input has " + std::to_string(x4.dim(3)) +
                   " channels, kernel expects " + std::to_string(Cin));
  EFFCRN_CHECK(bias.value.numel() == Cout, ShapeError, "conv bias size");
  const detail::ConvGeom g = detail::conv_geometry(x4.dim(1), N, stride, pad);
  TensorT<T> y = TensorT<T>::uninitialized({x4.dim(0), g.out_f, x4.dim(2), Cout});
  detail::conv2d_forward(x4, kernel.value, bias.value.data(), g, y);
  if (x.value.rank() == 3) y = y.reshaped({g.out_f, x4.dim(2), Cout});

  TapeT<T>* tape = joint_tape<T>({&x, &kernel, &bias});
  if (!tape) return VarT<T>(std::move(y));
  const int xn = x.node, kn = kernel.node, bn = bias.node;
  const Shape xshape = x.value.shape(), kshape = kernel.value.shape(),
              bshape = bias.value.shape();
  return tape->record(
      std::move(y),
      [=, xv = x4, kv = kernel.value](TapeT<T>& t, const TensorT<T>& g_out) {
        TensorT<T> g4 = detail::as_bftc(g_out);
        if (xn >= 0) {
          TensorT<T> gx = detail::as_bftc(t.grad_mut(xn, xshape));
          detail::conv2d_backward_input(gx, kv, g4, g);
        }
        if (kn >= 0)
          detail::conv2d_backward_kernel(t.grad_mut(kn, kshape), xv, g4, g);
        if (bn >= 0) detail::reduce_to_channels(t.grad_mut(bn, bshape), g4);
      });
}

// Transposed convolution along the frequency axis. Kernel (N, 1, C_out, C_in).
// Raw output (F_in-1)*stride + N is trimmed by crop_lo/crop_hi; with crops
// mirroring a strided conv's same-padding this is that conv's exact adjoint.
template <typename T>
VarT<T> conv2d_transpose(const VarT<T>& x, const VarT<T>& kernel,
                         const VarT<T>& bias, int stride, int crop_lo,
                         int crop_hi) {
  EFFCRN_CHECK(stride >= 1, ConfigError, "stride must be >= 1");
  TensorT<T> x4 = detail::as_bftc(x.value);
  EFFCRN_CHECK(kernel.value.rank() == 4 && kernel.value.dim(1) == 1, ShapeError,
               "deconv kernel must be (N,1,C_out,C_in)");
  const int N = kernel.value.dim(0);
  const int Cout = kernel.value.dim(2);
  const int Cin = kernel.value.dim(3);
  EFFCRN_CHECK(x4.dim(3) == Cin, ShapeError,
               "deconv input has " + std::to_string(x4.dim(3)) +
                   " channels, kernel expects " + std::to_string(Cin));
  EFFCRN_CHECK(bias.value.numel() == Cout, ShapeError, "deconv bias size");
  const int out_f = (x4.dim(1) - 1) * stride + N - crop_lo - crop_hi;
  EFFCRN_CHECK(out_f >= 1, ShapeError, "deconv crop larger than output");
  TensorT<T> y = TensorT<T>::uninitialized({x4.dim(0), out_f, x4.dim(2), Cout});
  detail::deconv_forward(x4, kernel.value, bias.value.data(), stride, crop_lo, y);
  if (x.value.rank() == 3) y = y.reshaped({out_f, x4.dim(2), Cout});

  TapeT<T>* tape = joint_tape<T>({&x, &kernel, &bias});
  if (!tape) return VarT<T>(std::move(y));
  const int xn = x.node, kn = kernel.node, bn = bias.node;
  const Shape xshape = x.value.shape(), kshape = kernel.value.shape(),
              bshape = bias.value.shape();
  return tape->record(
      std::move(y),
      [=, xv = x4, kv = kernel.value](TapeT<T>& t, const TensorT<T>& g_out) {
        TensorT<T> g4 = detail::as_bftc(g_out);
        if (xn >= 0) {
          TensorT<T> gx = detail::as_bftc(t.grad_mut(xn, xshape));
          detail::deconv_backward_input(gx, kv, g4, stride, crop_lo);
        }
        if (kn >= 0)
          detail::deconv_backward_kernel(t.grad_mut(kn, kshape), xv, g4, stride,
                                         crop_lo);
        if (bn >= 0) detail::reduce_to_channels(t.grad_mut(bn, bshape), g4);
      });
}

// Learnable per-channel scale and offset (the 1x1 depthwise skip).
template <typename T>
VarT<T> depthwise_1x1(const VarT<T>& x, const VarT<T>& weights,
                      const VarT<T>& bias) {
  TensorT<T> x4 = detail::as_bftc(x.value);
  const int C = x4.dim(3);
  EFFCRN_CHECK(weights.value.numel() == C, ShapeError,
               "depthwise weights: one scalar per channel, got " +
                   std::to_string(weights.value.numel()) + " for " +
                   std::to_string(C) + " channels");
  EFFCRN_CHECK(bias.value.numel() == C, ShapeError, "depthwise bias size");
  TensorT<T> y = TensorT<T>::uninitialized(x.value.shape());
  {
    const T* xd = x4.data();
    const T* w = weights.value.data();
    const T* bv = bias.value.data();
    T* yd = y.data();
    const std::int64_t rows = x4.numel() / C;
    for (std::int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < C; ++c) yd[r * C + c] = xd[r * C + c] * w[c] + bv[c];
  }
  TapeT<T>* tape = joint_tape<T>({&x, &weights, &bias});
  if (!tape) return VarT<T>(std::move(y));
  const int xn = x.node, wn = weights.node, bn = bias.node;
  const Shape xshape = x.value.shape(), wshape = weights.value.shape(),
              bshape = bias.value.shape();
  return tape->record(
      std::move(y),
      [=, xv = x4, wv = weights.value](TapeT<T>& t, const TensorT<T>& g_out) {
        TensorT<T> g4 = detail::as_bftc(g_out);
        const std::int64_t rows = g4.numel() / g4.dim(3);
        const int C = g4.dim(3);
        const T* gd = g4.data();
        if (xn >= 0) {
          T* gx = t.grad_mut(xn, xshape).data();
          const T* w = wv.data();
          for (std::int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < C; ++c) gx[r * C + c] += gd[r * C + c] * w[c];
        }
        if (wn >= 0) {
          T* gw = t.grad_mut(wn, wshape).data();
          const T* xd = xv.data();
          for (std::int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < C; ++c) gw[c] += gd[r * C + c] * xd[r * C + c];
        }
        if (bn >= 0) {
          T* gb = t.grad_mut(bn, bshape).data();
          for (std::int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < C; ++c) gb[c] += gd[r * C + c];
        }
      });
}

// --------------------------- elementwise ----------------------------------

namespace detail {

template <typename T, typename Fwd, typename Bwd>
VarT<T> unary_op(const VarT<T>& x, Fwd fwd, Bwd bwd_factor) {
  TensorT<T> y = TensorT<T>::uninitialized(x.value.shape());
  const T* xd = x.value.data();
  T* yd = y.data();
  for (std::int64_t i = 0; i < y.numel(); ++i) yd[i] = fwd(xd[i]);
  if (!x.tracked()) return VarT<T>(std::move(y));
  const int xn = x.node;
  const Shape xshape = x.value.shape();
  return x.tape->record(
      std::move(y), [=, xv = x.value](TapeT<T>& t, const TensorT<T>& g) {
        T* gx = t.grad_mut(xn, xshape).data();
        const T* gd = g.data();
        const T* xd2 = xv.data();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          gx[i] += gd[i] * bwd_factor(xd2[i]);
      });
}

// Unary op whose derivative is cheapest from the saved output.
template <typename T, typename Fwd, typename BwdFromOut>
VarT<T> unary_op_from_output(const VarT<T>& x, Fwd fwd, BwdFromOut bwd_factor) {
  TensorT<T> y = TensorT<T>::uninitialized(x.value.shape());
  const T* xd = x.value.data();
  T* yd = y.data();
  for (std::int64_t i = 0; i < y.numel(); ++i) yd[i] = fwd(xd[i]);
  if (!x.tracked()) return VarT<T>(std::move(y));
  const int xn = x.node;
  const Shape xshape = x.value.shape();
  return x.tape->record(y, [=, yv = y](TapeT<T>& t, const TensorT<T>& g) {
    T* gx = t.grad_mut(xn, xshape).data();
    const T* gd = g.data();
    const T* yd2 = yv.data();
    for (std::int64_t i = 0; i < g.numel(); ++i)
      gx[i] += gd[i] * bwd_factor(yd2[i]);
  });
}

template <typename T, typename Fwd, typename BwdA, typename BwdB>
VarT<T> binary_op(const VarT<T>& a, const VarT<T>& b, Fwd fwd, BwdA ga,
                  BwdB gb) {
  EFFCRN_CHECK(same_shape(a.value, b.value), ShapeError,
               "elementwise operands " + shape_str(a.value.shape()) + " vs " +
                   shape_str(b.value.shape()));
  TensorT<T> y = TensorT<T>::uninitialized(a.value.shape());
  const T* ad = a.value.data();
  const T* bd = b.value.data();
  T* yd = y.data();
  for (std::int64_t i = 0; i < y.numel(); ++i) yd[i] = fwd(ad[i], bd[i]);
  TapeT<T>* tape = joint_tape<T>({&a, &b});
  if (!tape) return VarT<T>(std::move(y));
  const int an = a.node, bn = b.node;
  const Shape shape = a.value.shape();
  return tape->record(std::move(y), [=, av = a.value, bv = b.value](
                                        TapeT<T>& t, const TensorT<T>& g) {
    const T* gd = g.data();
    const T* ad2 = av.data();
    const T* bd2 = bv.data();
    if (an >= 0) {
      T* gx = t.grad_mut(an, shape).data();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        gx[i] += gd[i] * ga(ad2[i], bd2[i]);
    }
    if (bn >= 0) {
      T* gx = t.grad_mut(bn, shape).data();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        gx[i] += gd[i] * gb(ad2[i], bd2[i]);
    }
  });
}

}  // namespace detail

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
  return detail::binary_op(
      a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
  return detail::binary_op(
      a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
  return detail::binary_op(
      a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
VarT<T> div(const VarT<T>& a, const VarT<T>& b) {
  return detail::binary_op(
      a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
VarT<T> scale(const VarT<T>& x, T s) {
  return detail::unary_op(
      x, [s](T v) { return v * s; }, [s](T) { return s; });
}

template <typename T>
VarT<T> square(const VarT<T>& x) {
  return detail::unary_op(
      x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

// max(x, floor); the clipped region passes no gradient.
template <typename T>
VarT<T> max_with(const VarT<T>& x, T floor) {
  return detail::unary_op(
      x, [floor](T v) { return v > floor ? v : floor; },
      [floor](T v) { return v > floor ? T(1) : T(0); });
}

// x^p for strictly positive x (use max_with first to establish the floor).
template <typename T>
VarT<T> pow_const(const VarT<T>& x, T p) {
  return detail::unary_op(
      x, [p](T v) { return std::pow(v, p); },
      [p](T v) { return p * std::pow(v, p - T(1)); });
}

template <typename T>
VarT<T> activation(const VarT<T>& x, Activation kind, T leaky_slope = T(0.2)) {
  switch (kind) {
    case Activation::linear:
      return x;
    case Activation::leaky_relu:
      return detail::unary_op(
          x, [leaky_slope](T v) { return v > T(0) ? v : leaky_slope * v; },
          [leaky_slope](T v) { return v > T(0) ? T(1) : leaky_slope; });
    case Activation::tanh:
      return detail::unary_op_from_output(
          x, [](T v) { return std::tanh(v); },
          [](T y) { return T(1) - y * y; });
    case Activation::sigmoid:
      return detail::unary_op_from_output(
          x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
          [](T y) { return y * (T(1) - y); });
  }
  throw ConfigError("unknown activation");
}

template <typename T>
VarT<T> vtanh(const VarT<T>& x) {
  return activation(x, Activation::tanh);
}

template <typename T>
VarT<T> vsigmoid(const VarT<T>& x) {
  return activation(x, Activation::sigmoid);
}

// ------------------------- shape manipulation -----------------------------

template <typename T>
VarT<T> reshape(const VarT<T>& x, Shape shape) {
  TensorT<T> y = x.value.reshaped(std::move(shape));
  if (!x.tracked()) return VarT<T>(std::move(y));
  const int xn = x.node;
  const Shape xshape = x.value.shape();
  return x.tape->record(std::move(y),
                        [=](TapeT<T>& t, const TensorT<T>& g) {
                          T* gx = t.grad_mut(xn, xshape).data();
                          const T* gd = g.data();
                          for (std::int64_t i = 0; i < g.numel(); ++i)
                            gx[i] += gd[i];
                        });
}

namespace detail {

// Copy src into dst along the frequency axis with offset; both rank 4.
template <typename T>
void copy_freq_block(const TensorT<T>& src, TensorT<T>& dst, int src_f0,
                     int dst_f0, int f_count, bool accumulate) {
  const int B = src.dim(0), Tt = src.dim(2), C = src.dim(3);
  const std::int64_t row = std::int64_t(Tt) * C;
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < f_count; ++f) {
      const T* s = src.data() + (std::int64_t(b) * src.dim(1) + src_f0 + f) * row;
      T* d = dst.data() + (std::int64_t(b) * dst.dim(1) + dst_f0 + f) * row;
      if (accumulate)
        for (std::int64_t i = 0; i < row; ++i) d[i] += s[i];
      else
        std::copy(s, s + row, d);
    }
}

}  // namespace detail

// Zero-pad along the frequency axis.
template <typename T>
VarT<T> pad_freq(const VarT<T>& x, int lo, int hi) {
  EFFCRN_CHECK(lo >= 0 && hi >= 0, ShapeError, "negative pad");
  TensorT<T> x4 = detail::as_bftc(x.value);
  Shape out_shape = x.value.shape();
  out_shape[x.value.rank() == 4 ? 1 : 0] += lo + hi;
  TensorT<T> y4 = TensorT<T>::zeros(
      {x4.dim(0), x4.dim(1) + lo + hi, x4.dim(2), x4.dim(3)});
  detail::copy_freq_block(x4, y4, 0, lo, x4.dim(1), false);
  TensorT<T> y = y4.reshaped(out_shape);
  if (!x.tracked()) return VarT<T>(std::move(y));
  const int xn = x.node;
  const Shape xshape = x.value.shape();
  return x.tape->record(std::move(y), [=](TapeT<T>& t, const TensorT<T>& g) {
    TensorT<T> g4 = detail::as_bftc(g);
    TensorT<T> gx = detail::as_bftc(t.grad_mut(xn, xshape));
    detail::copy_freq_block(g4, gx, lo, 0, gx.dim(1), true);
  });
}

// Trim along the frequency axis.
template <typename T>
VarT<T> crop_freq(const VarT<T>& x, int lo, int hi) {
  EFFCRN_CHECK(lo >= 0 && hi >= 0, ShapeError, "negative crop");
  TensorT<T> x4 = detail::as_bftc(x.value);
  const int out_f = x4.dim(1) - lo - hi;
  EFFCRN_CHECK(out_f >= 1, ShapeError, "crop exceeds tensor size");
  Shape out_shape = x.value.shape();
  out_shape[x.value.rank() == 4 ? 1 : 0] = out_f;
  TensorT<T> y4 =
      TensorT<T>::uninitialized({x4.dim(0), out_f, x4.dim(2), x4.dim(3)});
  detail::copy_freq_block(x4, y4, lo, 0, out_f, false);
  TensorT<T> y = y4.reshaped(out_shape);
  if (!x.tracked()) return VarT<T>(std::move(y));
  const int xn = x.node;
  const Shape xshape = x.value.shape();
  return x.tape->record(std::move(y), [=](TapeT<T>& t, const TensorT<T>& g) {
    TensorT<T> g4 = detail::as_bftc(g);
    TensorT<T> gx = detail::as_bftc(t.grad_mut(xn, xshape));
    detail::copy_freq_block(g4, gx, 0, lo, out_f, true);
  });
}

// Concatenate along the channel (last) axis.
template <typename T>
VarT<T> concat_channels(const VarT<T>& a, const VarT<T>& b) {
  EFFCRN_CHECK(a.value.rank() == b.value.rank(), ShapeError, "concat rank");
  const int r = a.value.rank();
  for (int i = 0; i + 1 < r; ++i)
    EFFCRN_CHECK(a.value.dim(i) == b.value.dim(i), ShapeError,
                 "concat leading dims " + shape_str(a.value.shape()) + " vs " +
                     shape_str(b.value.shape()));
  const int Ca = a.value.dim(r - 1), Cb = b.value.dim(r - 1);
  Shape out_shape = a.value.shape();
  out_shape[size_t(r - 1)] = Ca + Cb;
  TensorT<T> y = TensorT<T>::uninitialized(out_shape);
  const std::int64_t rows = a.value.numel() / Ca;
  for (std::int64_t row = 0; row < rows; ++row) {
    std::copy(a.value.data() + row * Ca, a.value.data() + (row + 1) * Ca,
              y.data() + row * (Ca + Cb));
    std::copy(b.value.data() + row * Cb, b.value.data() + (row + 1) * Cb,
              y.data() + row * (Ca + Cb) + Ca);
  }
  TapeT<T>* tape = joint_tape<T>({&a, &b});
  if (!tape) return VarT<T>(std::move(y));
  const int an = a.node, bn = b.node;
  const Shape ashape = a.value.shape(), bshape = b.value.shape();
  return tape->record(std::move(y), [=](TapeT<T>& t, const TensorT<T>& g) {
    const T* gd = g.data();
    if (an >= 0) {
      T* ga = t.grad_mut(an, ashape).data();
      for (std::int64_t row = 0; row < rows; ++row)
        for (int c = 0; c < Ca; ++c)
          ga[row * Ca + c] += gd[row * (Ca + Cb) + c];
    }
    if (bn >= 0) {
      T* gb = t.grad_mut(bn, bshape).data();
      for (std::int64_t row = 0; row < rows; ++row)
        for (int c = 0; c < Cb; ++c)
          gb[row * Cb + c] += gd[row * (Ca + Cb) + Ca + c];
    }
  });
}

// Concatenate (B,F,T_i,C) slices along the time axis.
template <typename T>
std::vector<int> concat_time_offsets(const std::vector<VarT<T>>& xs) {
  std::vector<int> offs(xs.size() + 1, 0);
  for (size_t i = 0; i < xs.size(); ++i)
    offs[i + 1] = offs[i] + detail::as_bftc(xs[i].value).dim(2);
  return offs;
}

template <typename T>
VarT<T> concat_time(const std::vector<VarT<T>>& xs) {
  EFFCRN_CHECK(!xs.empty(), UsageError, "concat_time of nothing");
  TensorT<T> first = detail::as_bftc(xs[0].value);
  const int B = first.dim(0), Fq = first.dim(1), C = first.dim(3);
  std::vector<int> offs = concat_time_offsets(xs);
  const int Ttot = offs.back();
  TensorT<T> y = TensorT<T>::uninitialized({B, Fq, Ttot, C});
  TapeT<T>* tape = nullptr;
  for (const auto& v : xs) {
    TensorT<T> x4 = detail::as_bftc(v.value);
    EFFCRN_CHECK(x4.dim(0) == B && x4.dim(1) == Fq && x4.dim(3) == C,
                 ShapeError, "concat_time slice shape mismatch");
    if (v.tracked()) {
      EFFCRN_CHECK(tape == nullptr || tape == v.tape, UsageError,
                   "operands recorded on different tapes");
      tape = v.tape;
    }
  }
  for (size_t s = 0; s < xs.size(); ++s) {
    TensorT<T> x4 = detail::as_bftc(xs[s].value);
    const int Ts = x4.dim(2);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < Fq; ++f)
        for (int t = 0; t < Ts; ++t) {
          const T* src = x4.data() + ((std::int64_t(b) * Fq + f) * Ts + t) * C;
          T* dst = y.data() +
                   ((std::int64_t(b) * Fq + f) * Ttot + offs[s] + t) * C;
          std::copy(src, src + C, dst);
        }
  }
  if (!tape) return VarT<T>(std::move(y));
  std::vector<int> nodes(xs.size());
  std::vector<Shape> shapes(xs.size());
  for (size_t s = 0; s < xs.size(); ++s) {
    nodes[s] = xs[s].node;
    shapes[s] = xs[s].value.shape();
  }
  return tape->record(std::move(y), [=](TapeT<T>& t, const TensorT<T>& g) {
    for (size_t s = 0; s < nodes.size(); ++s) {
      if (nodes[s] < 0) continue;
      TensorT<T> gx = detail::as_bftc(t.grad_mut(nodes[s], shapes[s]));
      const int Ts = gx.dim(2);
      for (int b = 0; b < B; ++b)
        for (int f = 0; f < Fq; ++f)
          for (int tt = 0; tt < Ts; ++tt) {
            const T* src =
                g.data() + ((std::int64_t(b) * Fq + f) * Ttot + offs[s] + tt) * C;
            T* dst = gx.data() + ((std::int64_t(b) * Fq + f) * Ts + tt) * C;
            for (int c = 0; c < C; ++c) dst[c] += src[c];
          }
    }
  });
}

// One (B,F,1,C) time slice of a (B,F,T,C) sequence.
template <typename T>
VarT<T> slice_time(const VarT<T>& x, int t) {
  TensorT<T> x4 = detail::as_bftc(x.value);
  const int B = x4.dim(0), Fq = x4.dim(1), Tt = x4.dim(2), C = x4.dim(3);
  EFFCRN_CHECK(t >= 0 && t < Tt, ShapeError, "time slice out of range");
  TensorT<T> y = TensorT<T>::uninitialized({B, Fq, 1, C});
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < Fq; ++f) {
      const T* src = x4.data() + ((std::int64_t(b) * Fq + f) * Tt + t) * C;
      std::copy(src, src + C, y.data() + (std::int64_t(b) * Fq + f) * C);
    }
  if (!x.tracked()) return VarT<T>(std::move(y));
  const int xn = x.node;
  const Shape xshape = x.value.shape();
  return x.tape->record(std::move(y), [=](TapeT<T>& tp, const TensorT<T>& g) {
    TensorT<T> gx = detail::as_bftc(tp.grad_mut(xn, xshape));
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < Fq; ++f) {
        const T* src = g.data() + (std::int64_t(b) * Fq + f) * C;
        T* dst = gx.data() + ((std::int64_t(b) * Fq + f) * Tt + t) * C;
        for (int c = 0; c < C; ++c) dst[c] += src[c];
      }
  });
}

// ------------------------------ dense -------------------------------------

// y = x * W + b with x (B,L), W (L,H), b (H).
template <typename T>
VarT<T> affine(const VarT<T>& x, const VarT<T>& weight, const VarT<T>& bias) {
  EFFCRN_CHECK(x.value.rank() == 2 && weight.value.rank() == 2, ShapeError,
               "affine expects (B,L) input and (L,H) weight");
  const int B = x.value.dim(0), L = x.value.dim(1);
  EFFCRN_CHECK(weight.value.dim(0) == L, ShapeError,
               "affine weight rows " + std::to_string(weight.value.dim(0)) +
                   " vs input length " + std::to_string(L));
  const int H = weight.value.dim(1);
  EFFCRN_CHECK(bias.value.numel() == H, ShapeError, "affine bias size");
  TensorT<T> y = TensorT<T>::uninitialized({B, H});
  for (int b = 0; b < B; ++b) {
    T* yr = y.data() + std::int64_t(b) * H;
    std::copy(bias.value.data(), bias.value.data() + H, yr);
    const T* xr = x.value.data() + std::int64_t(b) * L;
    for (int l = 0; l < L; ++l) {
      const T v = xr[l];
      const T* wr = weight.value.data() + std::int64_t(l) * H;
      for (int h = 0; h < H; ++h) yr[h] += v * wr[h];
    }
  }
  TapeT<T>* tape = joint_tape<T>({&x, &weight, &bias});
  if (!tape) return VarT<T>(std::move(y));
  const int xn = x.node, wn = weight.node, bn = bias.node;
  const Shape xshape = x.value.shape(), wshape = weight.value.shape(),
              bshape = bias.value.shape();
  return tape->record(std::move(y), [=, xv = x.value, wv = weight.value](
                                        TapeT<T>& t, const TensorT<T>& g) {
    const T* gd = g.data();
    if (xn >= 0) {
      TensorT<T> wt = TensorT<T>::uninitialized({H, L});
      for (int l = 0; l < L; ++l)
        for (int h = 0; h < H; ++h)
          wt.data()[std::int64_t(h) * L + l] = wv.data()[std::int64_t(l) * H + h];
      T* gx = t.grad_mut(xn, xshape).data();
      for (int b = 0; b < B; ++b) {
        const T* gr = gd + std::int64_t(b) * H;
        T* __restrict gxr = gx + std::int64_t(b) * L;
        for (int h = 0; h < H; ++h) {
          const T v = gr[h];
          const T* __restrict wr = wt.data() + std::int64_t(h) * L;
          for (int l = 0; l < L; ++l) gxr[l] += v * wr[l];
        }
      }
    }
    if (wn >= 0) {
      T* gw = t.grad_mut(wn, wshape).data();
      for (int b = 0; b < B; ++b) {
        const T* xr = xv.data() + std::int64_t(b) * L;
        const T* gr = gd + std::int64_t(b) * H;
        for (int l = 0; l < L; ++l) {
          const T v = xr[l];
          T* gwr = gw + std::int64_t(l) * H;
          for (int h = 0; h < H; ++h) gwr[h] += v * gr[h];
        }
      }
    }
    if (bn >= 0) {
      T* gb = t.grad_mut(bn, bshape).data();
      for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h) gb[h] += gd[std::int64_t(b) * H + h];
    }
  });
}

// ------------------------------ complex ------------------------------------

// Elementwise complex product of (...,2) tensors holding (Re, Im).
template <typename T>
VarT<T> complex_mul(const VarT<T>& a, const VarT<T>& b) {
  EFFCRN_CHECK(same_shape(a.value, b.value), ShapeError, "complex_mul shapes");
  EFFCRN_CHECK(a.value.dim(a.value.rank() - 1) == 2, ShapeError,
               "complex tensors end in a (Re,Im) axis of size 2");
  TensorT<T> y = TensorT<T>::uninitialized(a.value.shape());
  const std::int64_t n = y.numel() / 2;
  const T* ad = a.value.data();
  const T* bd = b.value.data();
  T* yd = y.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const T ar = ad[2 * i], ai = ad[2 * i + 1];
    const T br = bd[2 * i], bi = bd[2 * i + 1];
    yd[2 * i] = ar * br - ai * bi;
    yd[2 * i + 1] = ar * bi + ai * br;
  }
  TapeT<T>* tape = joint_tape<T>({&a, &b});
  if (!tape) return VarT<T>(std::move(y));
  const int an = a.node, bn = b.node;
  const Shape shape = a.value.shape();
  return tape->record(std::move(y), [=, av = a.value, bv = b.value](
                                        TapeT<T>& t, const TensorT<T>& g) {
    const T* gd = g.data();
    if (an >= 0) {
      T* ga = t.grad_mut(an, shape).data();
      const T* bd2 = bv.data();
      for (std::int64_t i = 0; i < n; ++i) {
        const T gr = gd[2 * i], gi = gd[2 * i + 1];
        const T br = bd2[2 * i], bi = bd2[2 * i + 1];
        ga[2 * i] += gr * br + gi * bi;
        ga[2 * i + 1] += -gr * bi + gi * br;
      }
    }
    if (bn >= 0) {
      T* gb = t.grad_mut(bn, shape).data();
      const T* ad2 = av.data();
      for (std::int64_t i = 0; i < n; ++i) {
        const T gr = gd[2 * i], gi = gd[2 * i + 1];
        const T ar = ad2[2 * i], ai = ad2[2 * i + 1];
        gb[2 * i] += gr * ar + gi * ai;
        gb[2 * i + 1] += -gr * ai + gi * ar;
      }
    }
  });
}

// Squared magnitude per complex element: (...,2) -> (...,1).
template <typename T>
VarT<T> complex_sq_mag(const VarT<T>& x) {
  const int r = x.value.rank();
  EFFCRN_CHECK(r >= 1 && x.value.dim(r - 1) == 2, ShapeError,
               "complex tensors end in a (Re,Im) axis of size 2");
  Shape out_shape = x.value.shape();
  out_shape[size_t(r - 1)] = 1;
  TensorT<T> y = TensorT<T>::uninitialized(out_shape);
  const std::int64_t n = y.numel();
  const T* xd = x.value.data();
  for (std::int64_t i = 0; i < n; ++i)
    y.data()[i] = xd[2 * i] * xd[2 * i] + xd[2 * i + 1] * xd[2 * i + 1];
  if (!x.tracked()) return VarT<T>(std::move(y));
  const int xn = x.node;
  const Shape xshape = x.value.shape();
  return x.tape->record(
      std::move(y), [=, xv = x.value](TapeT<T>& t, const TensorT<T>& g) {
        T* gx = t.grad_mut(xn, xshape).data();
        const T* gd = g.data();
        const T* xd2 = xv.data();
        for (std::int64_t i = 0; i < n; ++i) {
          gx[2 * i] += T(2) * xd2[2 * i] * gd[i];
          gx[2 * i + 1] += T(2) * xd2[2 * i + 1] * gd[i];
        }
      });
}

// Complex field scaled by a real field: (...,2) * (...,1) -> (...,2).
template <typename T>
VarT<T> scale_complex(const VarT<T>& x, const VarT<T>& s) {
  const int r = x.value.rank();
  EFFCRN_CHECK(r >= 1 && x.value.dim(r - 1) == 2, ShapeError,
               "complex tensors end in a (Re,Im) axis of size 2");
  EFFCRN_CHECK(s.value.numel() * 2 == x.value.numel(), ShapeError,
               "scale field must hold one scalar per complex element");
  TensorT<T> y = TensorT<T>::uninitialized(x.value.shape());
  const std::int64_t n = s.value.numel();
  const T* xd = x.value.data();
  const T* sd = s.value.data();
  for (std::int64_t i = 0; i < n; ++i) {
    y.data()[2 * i] = xd[2 * i] * sd[i];
    y.data()[2 * i + 1] = xd[2 * i + 1] * sd[i];
  }
  TapeT<T>* tape = joint_tape<T>({&x, &s});
  if (!tape) return VarT<T>(std::move(y));
  const int xn = x.node, sn = s.node;
  const Shape xshape = x.value.shape(), sshape = s.value.shape();
  return tape->record(std::move(y), [=, xv = x.value, sv = s.value](
                                        TapeT<T>& t, const TensorT<T>& g) {
    const T* gd = g.data();
    if (xn >= 0) {
      T* gx = t.grad_mut(xn, xshape).data();
      const T* sd2 = sv.data();
      for (std::int64_t i = 0; i < n; ++i) {
        gx[2 * i] += gd[2 * i] * sd2[i];
        gx[2 * i + 1] += gd[2 * i + 1] * sd2[i];
      }
    }
    if (sn >= 0) {
      T* gs = t.grad_mut(sn, sshape).data();
      const T* xd2 = xv.data();
      for (std::int64_t i = 0; i < n; ++i)
        gs[i] += gd[2 * i] * xd2[2 * i] + gd[2 * i + 1] * xd2[2 * i + 1];
    }
  });
}

// ----------------------------- reductions ----------------------------------

template <typename T>
VarT<T> sum_all(const VarT<T>& x) {
  T acc = T(0);
  const T* xd = x.value.data();
  for (std::int64_t i = 0; i < x.value.numel(); ++i) acc += xd[i];
  TensorT<T> y = TensorT<T>::scalar(acc);
  if (!x.tracked()) return VarT<T>(std::move(y));
  const int xn = x.node;
  const Shape xshape = x.value.shape();
  return x.tape->record(std::move(y), [=](TapeT<T>& t, const TensorT<T>& g) {
    T* gx = t.grad_mut(xn, xshape).data();
    const T gv = g.data()[0];
    for (std::int64_t i = 0; i < shape_numel(xshape); ++i) gx[i] += gv;
  });
}

}  // namespace effcrn
