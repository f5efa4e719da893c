// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <random>

#include "effcrn/grad_check.hpp"
#include "effcrn/ops.hpp"
#include "test_util.hpp"

using namespace effcrn;
using effcrn::testing::dot;
using effcrn::testing::max_rel_err;
using effcrn::testing::random_tensor;

namespace {

template <typename T>
VarT<T> constant(TensorT<T> t) {
  return VarT<T>(std::move(t));
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  Tensor t = Tensor::zeros({4, 1, 2});
  CHECK(t.numel() == 8);
  CHECK_THROWS_AS(Tensor::zeros({4, 0, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_vector({2, 2}, {1.f, 2.f, 3.f}), ShapeError);
  CHECK_THROWS_AS(t.reshaped({3, 3}), ShapeError);
}

TEST_CASE("conv2d sliding dot product on a ramp") {
  auto x = Tensor::from_vector({8, 1, 1}, {0, 1, 2, 3, 4, 5, 6, 7});
  auto k = Tensor::from_vector({2, 1, 1, 1}, {1, 1});
  auto y = conv2d(constant(x), constant(k), constant(Tensor::zeros({1})), 2,
                  PadMode::none);
  REQUIRE(y.value.shape() == Shape{4, 1, 1});
  CHECK(y.value[0] == doctest::Approx(1));
  CHECK(y.value[1] == doctest::Approx(5));
  CHECK(y.value[2] == doctest::Approx(9));
  CHECK(y.value[3] == doctest::Approx(13));
}

TEST_CASE("conv2d same-pad keeps the model input geometry") {
  std::mt19937 rng(1);
  auto x = random_tensor<float>({264, 1, 2}, rng);
  auto k = random_tensor<float>({12, 1, 2, 32}, rng);
  auto y = conv2d(constant(x), constant(k), constant(Tensor::zeros({32})), 1,
                  PadMode::same);
  CHECK(y.value.shape() == Shape{264, 1, 32});
}

TEST_CASE("conv2d zero kernel leaves only the bias") {
  std::mt19937 rng(2);
  auto x = random_tensor<float>({6, 1, 1}, rng);
  auto k = Tensor::zeros({3, 1, 1, 2});
  auto b = Tensor::from_vector({2}, {0.5f, -1.f});
  auto y = conv2d(constant(x), constant(k), constant(b), 1, PadMode::same);
  for (int f = 0; f < 6; ++f) {
    CHECK(y.value[2 * f] == doctest::Approx(0.5f));
    CHECK(y.value[2 * f + 1] == doctest::Approx(-1.f));
  }
}

TEST_CASE("conv2d error paths") {
  std::mt19937 rng(3);
  auto x = constant(random_tensor<float>({8, 1, 3}, rng));
  auto k = constant(random_tensor<float>({3, 1, 2, 4}, rng));
  auto b = constant(Tensor::zeros({4}));
  CHECK_THROWS_AS(conv2d(x, k, b, 1, PadMode::same), ShapeError);
  auto k_ok = constant(random_tensor<float>({3, 1, 3, 4}, rng));
  CHECK_THROWS_AS(conv2d(x, k_ok, b, 0, PadMode::same), ConfigError);
}

TEST_CASE("output shapes follow the closed-form formulas") {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const int in_f = 2 + int(rng() % 80);
    const int n = 1 + int(rng() % std::min(in_f, 13));
    const int stride = 1 + int(rng() % 3);
    auto x = constant(random_tensor<float>({in_f, 1, 2}, rng));
    auto k = constant(random_tensor<float>({n, 1, 2, 3}, rng));
    auto b = constant(Tensor::zeros({3}));

    auto y_valid = conv2d(x, k, b, stride, PadMode::none);
    CHECK(y_valid.value.dim(0) == (in_f - n) / stride + 1);

    auto y_same = conv2d(x, k, b, stride, PadMode::same);
    CHECK(y_same.value.dim(0) == (in_f + stride - 1) / stride);

    auto kt = constant(random_tensor<float>({n, 1, 3, 2}, rng));
    auto bt = constant(Tensor::zeros({3}));
    auto y_up = conv2d_transpose(x, kt, bt, stride, 0, 0);
    CHECK(y_up.value.dim(0) == (in_f - 1) * stride + n);
  }
}

TEST_CASE("deconv raw output size before cropping") {
  std::mt19937 rng(5);
  auto x = constant(random_tensor<float>({33, 1, 96}, rng));
  auto k = constant(random_tensor<float>({12, 1, 8, 96}, rng));
  auto b = constant(Tensor::zeros({8}));
  auto y = conv2d_transpose(x, k, b, 2, 0, 0);
  CHECK(y.value.dim(0) == 76);
}

TEST_CASE("deconv with unit kernel is the identity") {
  std::mt19937 rng(6);
  auto x = random_tensor<float>({9, 1, 3}, rng);
  auto k = Tensor::from_vector({1, 1, 3, 3},
                               {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto y = conv2d_transpose(constant(x), constant(k),
                            constant(Tensor::zeros({3})), 1, 0, 0);
  CHECK(max_rel_err(y.value, x) < 1e-7);
}

TEST_CASE("deconv is the adjoint of conv for shared kernels") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int in_f = 4 + 2 * int(rng() % 20);
    const int n = 2 + int(rng() % 3) * 2;  // even kernels as in the models
    const int stride = 1 + int(rng() % 2);
    const int ci = 1 + int(rng() % 3);
    const int co = 1 + int(rng() % 3);
    auto geom = detail::conv_geometry(in_f, n, stride, PadMode::same);

    auto x = random_tensor<float>({in_f, 1, ci}, rng);
    auto k = random_tensor<float>({n, 1, ci, co}, rng);
    auto y = random_tensor<float>({geom.out_f, 1, co}, rng);

    auto cx = conv2d(constant(x), constant(k), constant(Tensor::zeros({co})),
                     stride, PadMode::same);
    // Same kernel buffer read as (N,1,C_out,C_in) with the adjoint crop.
    auto dk = k.reshaped({n, 1, ci, co});
    auto dy = conv2d_transpose(constant(y), constant(dk),
                               constant(Tensor::zeros({ci})), stride,
                               geom.pad_lo, geom.pad_hi);
    REQUIRE(dy.value.shape() == x.shape());
    const double lhs = dot(cx.value, y);
    const double rhs = dot(x, dy.value);
    CHECK(effcrn::testing::rel_err(lhs, rhs, 1e-4) < 1e-4);
  }
}

TEST_CASE("conv2d is linear in its input") {
  std::mt19937 rng(8);
  auto x = random_tensor<float>({20, 1, 3}, rng);
  auto z = random_tensor<float>({20, 1, 3}, rng);
  auto k = random_tensor<float>({5, 1, 3, 4}, rng);
  auto zero_b = Tensor::zeros({4});
  const float a = 1.7f, b = -0.6f;

  Tensor mix = Tensor::uninitialized({20, 1, 3});
  for (std::int64_t i = 0; i < mix.numel(); ++i)
    mix.data()[i] = a * x[i] + b * z[i];

  auto lhs = conv2d(constant(mix), constant(k), constant(zero_b), 1,
                    PadMode::same);
  auto cx = conv2d(constant(x), constant(k), constant(zero_b), 1, PadMode::same);
  auto cz = conv2d(constant(z), constant(k), constant(zero_b), 1, PadMode::same);
  Tensor rhs = Tensor::uninitialized(lhs.value.shape());
  for (std::int64_t i = 0; i < rhs.numel(); ++i)
    rhs.data()[i] = a * cx.value[i] + b * cz.value[i];
  CHECK(max_rel_err(lhs.value, rhs, 1e-3) < 1e-5);
}

TEST_CASE("depthwise scales each channel independently") {
  auto x = Tensor::full({4, 1, 2}, 1.f);
  auto w = Tensor::from_vector({2}, {2.f, -1.f});
  auto y = depthwise_1x1(constant(x), constant(w), constant(Tensor::zeros({2})));
  for (int f = 0; f < 4; ++f) {
    CHECK(y.value[2 * f] == doctest::Approx(2.f));
    CHECK(y.value[2 * f + 1] == doctest::Approx(-1.f));
  }
  auto ones = Tensor::full({2}, 1.f);
  auto id = depthwise_1x1(constant(x), constant(ones), constant(Tensor::zeros({2})));
  CHECK(max_rel_err(id.value, x) == 0.0);
  auto bad_w = Tensor::zeros({3});
  CHECK_THROWS_AS(
      depthwise_1x1(constant(x), constant(bad_w), constant(Tensor::zeros({3}))),
      ShapeError);
}

TEST_CASE("depthwise weight gradient is the per-channel correlation") {
  std::mt19937 rng(9);
  TensorT<double> x = random_tensor<double>({5, 1, 3}, rng);
  ParameterT<double> w("w", TensorT<double>::full({3}, 0.5));
  ParameterT<double> b("b", TensorT<double>::zeros({3}));
  TapeT<double> tape;
  auto y = depthwise_1x1(VarT<double>(x), tape.param(w), tape.param(b));
  tape.backward(sum_all(y));
  for (int c = 0; c < 3; ++c) {
    double expect = 0;  // upstream gradient of sum() is all-ones
    for (int f = 0; f < 5; ++f) expect += x[f * 3 + c];
    CHECK(w.grad[c] == doctest::Approx(expect));
    CHECK(b.grad[c] == doctest::Approx(5.0));
  }
}

TEST_CASE("activation values") {
  auto x = Tensor::from_vector({4, 1, 1}, {-1.f, 0.f, 0.5f, 2.f});
  auto lrelu = activation(constant(x), Activation::leaky_relu, 0.2f);
  CHECK(lrelu.value[0] == doctest::Approx(-0.2f));
  CHECK(lrelu.value[3] == doctest::Approx(2.f));
  auto th = activation(constant(x), Activation::tanh);
  CHECK(th.value[1] == doctest::Approx(0.f));
  auto sg = activation(constant(x), Activation::sigmoid);
  CHECK(sg.value[1] == doctest::Approx(0.5f));
  auto lin = activation(constant(x), Activation::linear);
  CHECK(max_rel_err(lin.value, x) == 0.0);
}

TEST_CASE("backward on linear and tanh graphs") {
  std::mt19937 rng(10);
  TensorT<double> xv = random_tensor<double>({6, 1, 2}, rng);
  ParameterT<double> w("w", random_tensor<double>({6, 1, 2}, rng));

  SUBCASE("sum(w * x) gives grad(w) = x") {
    TapeT<double> tape;
    auto loss = sum_all(mul(tape.param(w), VarT<double>(xv)));
    tape.backward(loss);
    CHECK(max_rel_err(w.grad, xv) < 1e-12);
  }
  SUBCASE("sum(tanh(w)) at w=0 gives unit gradients") {
    ParameterT<double> w0("w0", TensorT<double>::zeros({5}));
    TapeT<double> tape;
    auto loss = sum_all(vtanh(tape.param(w0)));
    tape.backward(loss);
    for (int i = 0; i < 5; ++i) CHECK(w0.grad[i] == doctest::Approx(1.0));
  }
  SUBCASE("non-scalar loss is rejected") {
    TapeT<double> tape;
    auto y = mul(tape.param(w), VarT<double>(xv));
    CHECK_THROWS_AS(tape.backward(y), UsageError);
  }
  SUBCASE("unreachable parameters keep zero gradients") {
    ParameterT<double> unused("unused", random_tensor<double>({3}, rng));
    TapeT<double> tape;
    auto loss = sum_all(tape.param(w));
    (void)tape.param(unused);
    tape.backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(unused.grad[i] == 0.0);
  }
}

TEST_CASE("grad_check approves every op family") {
  std::mt19937 rng(11);

  SUBCASE("linear graph") {
    ParameterT<double> w("w", random_tensor<double>({8}, rng));
    TensorT<double> x = random_tensor<double>({8}, rng);
    auto build = [&](TapeT<double>& tape) {
      return sum_all(mul(tape.param(w), VarT<double>(x)));
    };
    CHECK(grad_check<double>(build, {&w}) < 1e-5);
  }

  SUBCASE("single conv layer") {
    ParameterT<double> k("k", random_tensor<double>({5, 1, 3, 4}, rng, 0.5));
    ParameterT<double> b("b", random_tensor<double>({4}, rng, 0.1));
    TensorT<double> x = random_tensor<double>({12, 1, 3}, rng);
    auto build = [&](TapeT<double>& tape) {
      auto y = conv2d(VarT<double>(x), tape.param(k), tape.param(b), 2,
                      PadMode::same);
      return sum_all(square(vtanh(y)));
    };
    CHECK(grad_check<double>(build, {&k, &b}) < 1e-3);
  }

  SUBCASE("deconv, depthwise, activations, complex ops") {
    ParameterT<double> k("k", random_tensor<double>({4, 1, 3, 2}, rng, 0.5));
    ParameterT<double> dw("dw", random_tensor<double>({3}, rng));
    ParameterT<double> db("db", random_tensor<double>({3}, rng, 0.1));
    TensorT<double> x = random_tensor<double>({10, 1, 2}, rng);
    TensorT<double> other = random_tensor<double>({20, 1, 3}, rng);
    auto build = [&](TapeT<double>& tape) {
      auto up = conv2d_transpose(VarT<double>(x), tape.param(k),
                                 VarT<double>(TensorT<double>::zeros({3})), 2,
                                 1, 1);
      auto scaled = depthwise_1x1(up, tape.param(dw), tape.param(db));
      auto act = activation(scaled, Activation::leaky_relu, 0.2);
      auto mixed = add(act, mul(VarT<double>(other), vsigmoid(scaled)));
      return sum_all(mixed);
    };
    CHECK(grad_check<double>(build, {&k, &dw, &db}) < 1e-3);
  }

  SUBCASE("pow, max, div, sqrt composites") {
    ParameterT<double> w("w", random_tensor<double>({6, 1, 2}, rng));
    auto build = [&](TapeT<double>& tape) {
      auto wv = tape.param(w);
      auto q = max_with(square(wv), 1e-12);
      auto m = pow_const(q, 0.5);
      auto s = div(vtanh(m), m);
      return sum_all(mul(s, s));
    };
    CHECK(grad_check<double>(build, {&w}) < 1e-3);
  }

  SUBCASE("affine and concat") {
    ParameterT<double> W("W", random_tensor<double>({7, 4}, rng, 0.5));
    ParameterT<double> b("b", random_tensor<double>({4}, rng, 0.1));
    TensorT<double> x = random_tensor<double>({2, 3}, rng);
    TensorT<double> h = random_tensor<double>({2, 4}, rng);
    auto build = [&](TapeT<double>& tape) {
      auto xh = concat_channels(VarT<double>(x), VarT<double>(h));
      return sum_all(vtanh(affine(xh, tape.param(W), tape.param(b))));
    };
    CHECK(grad_check<double>(build, {&W, &b}) < 1e-3);
  }

  SUBCASE("complex multiply and time concat") {
    ParameterT<double> g("g", random_tensor<double>({5, 2, 2}, rng));
    TensorT<double> y = random_tensor<double>({5, 2, 2}, rng);
    auto build = [&](TapeT<double>& tape) {
      auto prod = complex_mul(tape.param(g), VarT<double>(y));
      auto both = concat_time<double>(
          {reshape(prod, {1, 5, 2, 2}), reshape(prod, {1, 5, 2, 2})});
      return sum_all(square(both));
    };
    CHECK(grad_check<double>(build, {&g}) < 1e-3);
  }

  SUBCASE("pad and crop") {
    ParameterT<double> w("w", random_tensor<double>({9, 1, 2}, rng));
    auto build = [&](TapeT<double>& tape) {
      auto padded = pad_freq(tape.param(w), 2, 3);
      auto cropped = crop_freq(padded, 1, 2);
      return sum_all(square(cropped));
    };
    CHECK(grad_check<double>(build, {&w}) < 1e-3);
  }
}

TEST_CASE("tapes cannot be mixed") {
  TapeT<double> t1, t2;
  ParameterT<double> a("a", TensorT<double>::full({2}, 1.0));
  ParameterT<double> b("b", TensorT<double>::full({2}, 2.0));
  auto va = t1.param(a);
  auto vb = t2.param(b);
  CHECK_THROWS_AS(add(va, vb), UsageError);
}
