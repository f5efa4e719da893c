// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/selftest.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "effcrn/grad_check.hpp"
#include "effcrn/loss.hpp"
#include "effcrn/mask.hpp"
#include "effcrn/model.hpp"
#include "effcrn/stft.hpp"

namespace effcrn {

namespace {

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

CheckResult gradient_checks() {
  std::mt19937 rng(71);
  double worst = 0;
  std::string worst_name = "-";
  auto track = [&](const std::string& name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };

  {
    ParameterT<double> k("k", TensorT<double>::uniform({5, 1, 3, 4}, 0.4, rng));
    ParameterT<double> b("b", TensorT<double>::uniform({4}, 0.1, rng));
    TensorT<double> x = TensorT<double>::uniform({12, 1, 3}, 0.8, rng);
    auto build = [&](TapeT<double>& tape) {
      return sum_all(square(vtanh(conv2d(VarT<double>(x), tape.param(k),
                                         tape.param(b), 2, PadMode::same))));
    };
    track("conv2d", grad_check<double>(build, {&k, &b}));
  }
  {
    ParameterT<double> k("k", TensorT<double>::uniform({4, 1, 3, 2}, 0.4, rng));
    ParameterT<double> x("x", TensorT<double>::uniform({7, 1, 2}, 0.8, rng));
    auto build = [&](TapeT<double>& tape) {
      return sum_all(square(conv2d_transpose(
          tape.param(x), tape.param(k),
          VarT<double>(TensorT<double>::zeros({3})), 2, 1, 1)));
    };
    track("conv2d_transpose", grad_check<double>(build, {&k, &x}));
  }
  {
    ParameterT<double> w("w", TensorT<double>::uniform({5}, 0.8, rng));
    ParameterT<double> b("b", TensorT<double>::uniform({5}, 0.2, rng));
    TensorT<double> x = TensorT<double>::uniform({9, 1, 5}, 0.8, rng);
    auto build = [&](TapeT<double>& tape) {
      return sum_all(
          square(depthwise_1x1(VarT<double>(x), tape.param(w), tape.param(b))));
    };
    track("depthwise_1x1", grad_check<double>(build, {&w, &b}));
  }
  {
    ParameterT<double> x("x", TensorT<double>::uniform({40}, 1.0, rng));
    auto build = [&](TapeT<double>& tape) {
      auto v = tape.param(x);
      auto mix = add(vtanh(v), mul(vsigmoid(v),
                                   activation(v, Activation::leaky_relu, 0.2)));
      return sum_all(square(mix));
    };
    GradCheckOptions<double> opt;
    opt.eps_scale = 1e-5;  // off the leaky kink
    track("activations", grad_check<double>(build, {&x}, opt));
  }
  {
    auto cell = ConvLSTMCellT<double>::create("clstm", 2, 3, 4, rng);
    TensorT<double> x = TensorT<double>::uniform({1, 6, 1, 2}, 0.8, rng);
    auto build = [&](TapeT<double>& tape) {
      VarT<double> h(TensorT<double>::zeros({1, 6, 1, 3}));
      VarT<double> c(TensorT<double>::zeros({1, 6, 1, 3}));
      VarT<double> acc;
      for (int t = 0; t < 4; ++t) {
        auto out = clstm_step(VarT<double>(x), h, c, cell, &tape);
        h = out.h;
        c = out.c;
        acc = t == 0 ? sum_all(square(out.y)) : add(acc, sum_all(square(out.y)));
      }
      return acc;
    };
    track("conv_lstm", grad_check<double>(build, cell.parameters()));
  }
  {
    auto cell = GRUCellT<double>::create("gru", 4, 3, rng);
    TensorT<double> x = TensorT<double>::uniform({2, 4}, 0.8, rng);
    auto build = [&](TapeT<double>& tape) {
      VarT<double> h(TensorT<double>::zeros({2, 3}));
      VarT<double> acc;
      for (int t = 0; t < 6; ++t) {
        auto out = gru_step(VarT<double>(x), h, cell, &tape);
        h = out.h;
        acc = t == 0 ? sum_all(square(out.y)) : add(acc, sum_all(square(out.y)));
      }
      return acc;
    };
    track("gru", grad_check<double>(build, cell.parameters()));
  }
  {
    ParameterT<double> est("est", TensorT<double>::uniform({9, 2, 2}, 1.0, rng));
    for (std::int64_t i = 0; i < est.value.numel(); ++i)
      est.value.data()[i] += est.value[i] >= 0 ? 0.05 : -0.05;
    TensorT<double> tgt = TensorT<double>::uniform({9, 2, 2}, 1.0, rng);
    auto build = [&](TapeT<double>& tape) {
      return compressed_loss(bound_mask(tape.param(est)), VarT<double>(tgt),
                             LossConfigT<double>{});
    };
    track("loss+bounding", grad_check<double>(build, {&est}));
  }

  CheckResult res;
  res.name = "gradient checks";
  res.pass = worst <= 5e-3;
  res.detail = "max rel err " + fmt(worst) + " (" + worst_name + ")";
  return res;
}

CheckResult adjointness_check() {
  std::mt19937 rng(72);
  double worst = 0;
  std::string worst_at = "-";
  for (const auto& ref : reference_table()) {
    auto graph = build_model(ref.variant);
    for (const auto& layer : graph.layer_table()) {
      if (layer.kind != LayerKind::conv && layer.kind != LayerKind::deconv)
        continue;
      const int in_f = layer.kind == LayerKind::conv ? layer.in_freq
                                                     : layer.out_freq;
      const auto geom =
          detail::conv_geometry(in_f, layer.kernel, layer.stride, PadMode::same);
      const int ci = std::min(layer.in_ch, 4), co = std::min(layer.out_ch, 4);
      TensorT<float> x = TensorT<float>::uniform({in_f, 1, ci}, 1.f, rng);
      TensorT<float> k =
          TensorT<float>::uniform({layer.kernel, 1, ci, co}, 1.f, rng);
      TensorT<float> y = TensorT<float>::uniform({geom.out_f, 1, co}, 1.f, rng);
      auto cx = conv2d(VarT<float>(x), VarT<float>(k),
                       VarT<float>(TensorT<float>::zeros({co})), layer.stride,
                       PadMode::same);
      auto dy = conv2d_transpose(VarT<float>(y), VarT<float>(k),
                                 VarT<float>(TensorT<float>::zeros({ci})),
                                 layer.stride, geom.pad_lo, geom.pad_hi);
      double lhs = 0, rhs = 0, cx_sq = 0, y_sq = 0;
      for (std::int64_t i = 0; i < cx.value.numel(); ++i) {
        lhs += double(cx.value[i]) * y[i];
        cx_sq += double(cx.value[i]) * cx.value[i];
        y_sq += double(y[i]) * y[i];
      }
      for (std::int64_t i = 0; i < x.numel(); ++i)
        rhs += double(x[i]) * dy.value[i];
      // normalized by the product-norm scale so sign cancellation in the
      // inner product cannot inflate the relative error
      const double scale = std::sqrt(cx_sq * y_sq);
      const double err = std::abs(lhs - rhs) /
                         std::max({std::abs(lhs), scale, 1e-4});
      if (err > worst) {
        worst = err;
        worst_at = ref.variant + std::string("/") + layer.name;
      }
    }
  }
  CheckResult res;
  res.name = "conv/deconv adjointness";
  res.pass = worst <= 1e-4;
  res.detail = "max rel err " + fmt(worst) + " (" + worst_at + ")";
  return res;
}

CheckResult stft_roundtrip_check() {
  const FrameConfig cfg = make_frame_config();
  std::mt19937 rng(73);
  std::uniform_real_distribution<float> dist(-0.8f, 0.8f);
  std::vector<float> signal(size_t(cfg.sample_rate));
  for (auto& v : signal) v = dist(rng);
  Tensor spec = stft(signal, cfg);
  auto rec = istft(spec, cfg, std::int64_t(signal.size()));
  const int edge = cfg.dft_size - cfg.frame_shift;
  double worst = 0;
  for (size_t i = size_t(edge); i + size_t(edge) < signal.size(); ++i)
    worst = std::max(worst, std::abs(double(rec[i]) - signal[i]) / 0.8);
  CheckResult res;
  res.name = "stft round trip";
  res.pass = worst <= 1e-6;
  res.detail = "max interior rel err " + fmt(worst);
  return res;
}

CheckResult pad_plan_check() {
  std::mt19937 rng(74);
  for (int trial = 0; trial < 500; ++trial) {
    const int stages = 1 + int(rng() % 6);
    const int m = (2 << stages) + int(rng() % 400);
    auto plan = plan_padding(m, stages, PaddingPolicy::in_network);
    int size = m;
    for (int s = 0; s < stages; ++s) {
      const int pad = size % 2;
      if (plan.pad_bits[size_t(s)] != pad || plan.raw_sizes[size_t(s)] != size)
        return {"pad-plan enumeration", false,
                "mismatch at m=" + std::to_string(m) +
                    " stages=" + std::to_string(stages)};
      size = (size + pad) / 2;
    }
    if (plan.bottleneck != size)
      return {"pad-plan enumeration", false,
              "bottleneck mismatch at m=" + std::to_string(m)};
  }
  auto fcrn = plan_padding(264, 3, PaddingPolicy::external);
  if (fcrn.bottleneck != 33)
    return {"pad-plan enumeration", false, "external plan for 264 is off"};
  return {"pad-plan enumeration", true, "500 random plans + externals"};
}

std::vector<CheckResult> accounting_checks() {
  std::vector<CheckResult> out;
  double worst_param_dev = 0, worst_flops_dev = 0;
  std::string worst_param_at, worst_flops_at;
  std::vector<std::pair<std::string, double>> params, flops;
  for (const auto& ref : reference_table()) {
    auto graph = build_model(ref.variant);
    const double p_dev =
        (double(graph.count_params()) - ref.params) / ref.params;
    const double f_dev =
        (double(graph.count_flops_per_frame()) - ref.flops_per_frame) /
        ref.flops_per_frame;
    params.emplace_back(ref.variant, double(graph.count_params()));
    flops.emplace_back(ref.variant, double(graph.count_flops_per_frame()));
    if (std::abs(p_dev) > std::abs(worst_param_dev)) {
      worst_param_dev = p_dev;
      worst_param_at = ref.variant;
    }
    if (std::abs(f_dev) > std::abs(worst_flops_dev)) {
      worst_flops_dev = f_dev;
      worst_flops_at = ref.variant;
    }
  }
  out.push_back({"parameter accounting vs published totals",
                 std::abs(worst_param_dev) <= 0.10,
                 "worst dev " + fmt(100 * worst_param_dev) + "% (" +
                     worst_param_at + "), gate 10%"});
  out.push_back({"flops accounting vs published totals",
                 std::abs(worst_flops_dev) <= 0.20,
                 "worst dev " + fmt(100 * worst_flops_dev) + "% (" +
                     worst_flops_at + "), gate 20%"});

  const auto delta = build_model("FCRN15").count_params() -
                     build_model("FCRN15-C").count_params();
  const double delta_dev = (double(delta) - 98e3) / 98e3;
  out.push_back({"second-CLSTM removal delta", std::abs(delta_dev) <= 0.05,
                 std::to_string(delta) + " params, dev " +
                     fmt(100 * delta_dev) + "%, gate 5%"});

  bool order_ok = true;
  std::string order_detail = "published orderings preserved";
  const auto& refs = reference_table();
  auto check_order = [&](auto& actual, auto key) {
    for (size_t i = 0; i < refs.size(); ++i)
      for (size_t j = 0; j < refs.size(); ++j) {
        if (key(refs[i]) < key(refs[j]) &&
            !(actual[i].second < actual[j].second)) {
          order_ok = false;
          order_detail = "ordering broken: " + refs[i].variant + " vs " +
                         refs[j].variant;
        }
      }
  };
  check_order(params, [](const ReferenceEntry& r) { return r.params; });
  check_order(flops, [](const ReferenceEntry& r) { return r.flops_per_frame; });
  out.push_back({"complexity orderings", order_ok, order_detail});
  return out;
}

}  // namespace

std::vector<CheckResult> run_selftest() {
  std::vector<CheckResult> results;
  results.push_back(gradient_checks());
  results.push_back(adjointness_check());
  results.push_back(stft_roundtrip_check());
  results.push_back(pad_plan_check());
  for (auto& r : accounting_checks()) results.push_back(std::move(r));
  return results;
}

}  // namespace effcrn
