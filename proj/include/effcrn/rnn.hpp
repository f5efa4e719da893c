// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <type_traits>
#include <random>
#include <string>
#include <vector>

#include "effcrn/ops.hpp"
#include "effcrn/tape.hpp"

namespace effcrn {

template <typename T>
inline VarT<T> use_param(std::type_identity_t<TapeT<T>>* tape,
                         ParameterT<T>& p) {
  return tape ? tape->param(p) : VarT<T>(p.value);
}

// y = a*x + b elementwise with scalar constants.
template <typename T>
VarT<T> affine_scalar(const VarT<T>& x, T a, T b) {
  return detail::unary_op(
      x, [a, b](T v) { return a * v + b; }, [a](T) { return a; });
}

// Convolutional LSTM over the frequency axis. Gate transforms are same-padded
// stride-1 convolutions of the concatenated (input, hidden) channels; gate
// activations are sigmoid with a tanh cell candidate. No peepholes; the forget
// gate bias starts at 1.
template <typename T>
struct ConvLSTMCellT {
  int in_channels = 0;
  int hidden_channels = 0;
  int ksize = 0;
  ParameterT<T> k_input, k_forget, k_cell, k_output;
  ParameterT<T> b_input, b_forget, b_cell, b_output;

  static ConvLSTMCellT create(const std::string& name, int in_ch, int hidden,
                              int ksize, std::mt19937& rng) {
    ConvLSTMCellT cell;
    cell.in_channels = in_ch;
    cell.hidden_channels = hidden;
    cell.ksize = ksize;
    const int cat = in_ch + hidden;
    const T limit = T(std::sqrt(6.0 / (double(ksize) * cat + double(ksize) * hidden)));
    auto make_kernel = [&](const char* gate) {
      return ParameterT<T>(name + ".k_" + gate,
                           TensorT<T>::uniform({ksize, 1, cat, hidden}, limit, rng));
    };
    auto make_bias = [&](const char* gate, T init) {
      return ParameterT<T>(name + ".b_" + gate,
                           TensorT<T>::full({hidden}, init));
    };
    cell.k_input = make_kernel("input");
    cell.k_forget = make_kernel("forget");
    cell.k_cell = make_kernel("cell");
    cell.k_output = make_kernel("output");
    cell.b_input = make_bias("input", T(0));
    cell.b_forget = make_bias("forget", T(1));
    cell.b_cell = make_bias("cell", T(0));
    cell.b_output = make_bias("output", T(0));
    return cell;
  }

  std::vector<ParameterT<T>*> parameters() {
    return {&k_input, &b_input, &k_forget, &b_forget,
            &k_cell,  &b_cell,  &k_output, &b_output};
  }
};

template <typename T>
struct ClstmStepResult {
  VarT<T> y;
  VarT<T> h;
  VarT<T> c;
};

// One CLSTM time step. x is (B,F',1,C_in); h and c are (B,F',1,C_hidden).
template <typename T>
ClstmStepResult<T> clstm_step(const VarT<T>& x, const VarT<T>& h,
                              const VarT<T>& c, ConvLSTMCellT<T>& cell,
                              std::type_identity_t<TapeT<T>>* tape) {
  EFFCRN_CHECK(x.value.rank() == 4 && h.value.rank() == 4, ShapeError,
               "clstm_step expects batched (B,F,1,C) tensors");
  EFFCRN_CHECK(x.value.dim(1) == h.value.dim(1), ShapeError,
               "clstm input frequency size " + std::to_string(x.value.dim(1)) +
                   " does not match state " + std::to_string(h.value.dim(1)));
  EFFCRN_CHECK(x.value.dim(3) == cell.in_channels, ShapeError,
               "clstm input channels");
  EFFCRN_CHECK(h.value.dim(3) == cell.hidden_channels &&
                   same_shape(h.value, c.value),
               ShapeError, "clstm state shape");
  VarT<T> z = concat_channels(x, h);
  auto gate_conv = [&](ParameterT<T>& k, ParameterT<T>& b) {
    return conv2d(z, use_param(tape, k), use_param(tape, b), 1, PadMode::same);
  };
  VarT<T> gate_in = vsigmoid(gate_conv(cell.k_input, cell.b_input));
  VarT<T> gate_forget = vsigmoid(gate_conv(cell.k_forget, cell.b_forget));
  VarT<T> candidate = vtanh(gate_conv(cell.k_cell, cell.b_cell));
  VarT<T> gate_out = vsigmoid(gate_conv(cell.k_output, cell.b_output));
  VarT<T> c_next = add(mul(gate_forget, c), mul(gate_in, candidate));
  VarT<T> h_next = mul(gate_out, vtanh(c_next));
  return {h_next, h_next, c_next};
}

// Dense GRU cell over flattened bottleneck vectors.
template <typename T>
struct GRUCellT {
  int input_size = 0;
  int hidden_size = 0;
  ParameterT<T> w_update, w_reset, w_cand;
  ParameterT<T> b_update, b_reset, b_cand;

  static GRUCellT create(const std::string& name, int input, int hidden,
                         std::mt19937& rng) {
    GRUCellT cell;
    cell.input_size = input;
    cell.hidden_size = hidden;
    const int rows = input + hidden;
    const T limit = T(std::sqrt(6.0 / (double(rows) + hidden)));
    auto make_w = [&](const char* gate) {
      return ParameterT<T>(name + ".w_" + gate,
                           TensorT<T>::uniform({rows, hidden}, limit, rng));
    };
    auto make_b = [&](const char* gate) {
      return ParameterT<T>(name + ".b_" + gate, TensorT<T>::zeros({hidden}));
    };
    cell.w_update = make_w("update");
    cell.w_reset = make_w("reset");
    cell.w_cand = make_w("cand");
    cell.b_update = make_b("update");
    cell.b_reset = make_b("reset");
    cell.b_cand = make_b("cand");
    return cell;
  }

  std::vector<ParameterT<T>*> parameters() {
    return {&w_update, &b_update, &w_reset, &b_reset, &w_cand, &b_cand};
  }
};

template <typename T>
struct GruStepResult {
  VarT<T> y;
  VarT<T> h;
};

// One GRU time step; x is (B,L), h is (B,H). Output equals the new hidden.
template <typename T>
GruStepResult<T> gru_step(const VarT<T>& x, const VarT<T>& h,
                          GRUCellT<T>& cell,
                          std::type_identity_t<TapeT<T>>* tape) {
  EFFCRN_CHECK(x.value.rank() == 2 && h.value.rank() == 2, ShapeError,
               "gru_step expects (B,L) input and (B,H) state");
  EFFCRN_CHECK(x.value.dim(1) == cell.input_size, ShapeError,
               "gru input size " + std::to_string(x.value.dim(1)) +
                   ", cell expects " + std::to_string(cell.input_size));
  EFFCRN_CHECK(h.value.dim(1) == cell.hidden_size && h.value.dim(0) == x.value.dim(0),
               ShapeError, "gru state shape");
  VarT<T> xh = concat_channels(x, h);
  VarT<T> z = vsigmoid(affine(xh, use_param(tape, cell.w_update),
                              use_param(tape, cell.b_update)));
  VarT<T> r = vsigmoid(affine(xh, use_param(tape, cell.w_reset),
                              use_param(tape, cell.b_reset)));
  VarT<T> n = vtanh(affine(concat_channels(x, mul(r, h)),
                           use_param(tape, cell.w_cand),
                           use_param(tape, cell.b_cand)));
  // h' = (1-z) * n + z * h
  VarT<T> h_next = add(mul(affine_scalar(z, T(-1), T(1)), n), mul(z, h));
  return {h_next, h_next};
}

// Per-session recurrent state: one (h, c) pair per CLSTM, one hidden vector
// per GRU, in bottleneck order. Owned by a single streaming session.
template <typename T>
struct RecurrentStateT {
  struct CellState {
    VarT<T> h;
    VarT<T> c;  // undefined for GRU cells
  };
  std::vector<CellState> cells;
  const void* owner = nullptr;
  int batch = 0;
};

using RecurrentState = RecurrentStateT<float>;

}  // namespace effcrn
