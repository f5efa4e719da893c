// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "effcrn/checkpoint.hpp"
#include "effcrn/model.hpp"
#include "effcrn/topology.hpp"
#include "test_util.hpp"

using namespace effcrn;

namespace {

// Closed-form parameter counting, independent of the LayerDesc accounting.
std::int64_t conv_params(int n, int cin, int cout) {
  return std::int64_t(n) * cin * cout + cout;
}

std::int64_t clstm_params(int n, int cin, int hidden) {
  return 4 * (std::int64_t(n) * (cin + hidden) * hidden + hidden);
}

std::int64_t gru_params(int input, int hidden) {
  return 3 * (std::int64_t(input + hidden) * hidden + hidden);
}

// U-net totals from first principles for a variant with `stages` blocks.
std::int64_t unet_params(int F, int N, int stages, int clstms, bool gru,
                         int bottleneck_freq) {
  std::int64_t total = 0;
  for (int i = 1; i <= stages; ++i) {
    const int cin = i == 1 ? 2 : (i - 1) * F;
    total += conv_params(N, cin, i * F);      // encoder conv
    total += conv_params(N, i * F, i * F);    // encoder downsampler
    total += 2 * i * F;                       // depthwise skip w + b
    total += conv_params(N, i * F, i * F);    // decoder conv
  }
  int ch = stages * F;
  for (int c = 0; c < clstms; ++c) {
    total += clstm_params(N, ch, F);
    ch = F;
  }
  if (gru) total += gru_params(bottleneck_freq * ch, bottleneck_freq * ch);
  // decoder transposed convolutions, bottom-up
  int dec_in = ch;
  for (int i = stages; i >= 1; --i) {
    total += conv_params(N, dec_in, i * F);
    dec_in = i * F;
  }
  total += conv_params(N, F, 2);  // output layer
  return total;
}

}  // namespace

TEST_CASE("padding plans") {
  SUBCASE("external 264 over three stages needs no in-network pads") {
    auto plan = plan_padding(264, 3, PaddingPolicy::external);
    CHECK(plan.pad_bits == std::vector<int>{0, 0, 0});
    CHECK(plan.raw_sizes == std::vector<int>{264, 132, 66});
    CHECK(plan.bottleneck == 33);
  }
  SUBCASE("in-network 260 over five stages pads the three odd stages") {
    auto plan = plan_padding(260, 5, PaddingPolicy::in_network);
    CHECK(plan.pad_bits == std::vector<int>{0, 0, 1, 1, 1});
    CHECK(plan.padded_sizes == std::vector<int>{260, 130, 66, 34, 18});
    CHECK(plan.bottleneck == 9);
  }
  SUBCASE("powers of two never pad") {
    for (int k = 1; k <= 8; ++k) {
      auto plan = plan_padding(1 << k, k, PaddingPolicy::in_network);
      for (int bit : plan.pad_bits) CHECK(bit == 0);
      CHECK(plan.bottleneck == 1);
    }
  }
  SUBCASE("external mode rejects sizes that cannot halve") {
    CHECK_THROWS_AS(plan_padding(260, 3, PaddingPolicy::external), ConfigError);
  }
  SUBCASE("sizes that collapse below 2 are rejected") {
    CHECK_THROWS_AS(plan_padding(8, 6, PaddingPolicy::in_network), ConfigError);
  }
  SUBCASE("brute-force enumeration of in-network plans") {
    std::mt19937 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
      const int stages = 1 + int(rng() % 6);
      const int m = (2 << stages) + int(rng() % 500);
      auto plan = plan_padding(m, stages, PaddingPolicy::in_network);
      int size = m;
      for (int s = 0; s < stages; ++s) {
        const int pad = size % 2;
        CHECK(plan.pad_bits[size_t(s)] == pad);
        CHECK(plan.raw_sizes[size_t(s)] == size);
        size = (size + pad) / 2;
      }
      CHECK(plan.bottleneck == size);
    }
  }
}

TEST_CASE("variant specs") {
  SUBCASE("FCRN15 hyperparameters") {
    auto spec = spec_for_variant("FCRN15");
    CHECK(spec.base_filters == 32);
    CHECK(spec.kernel_freq == 12);
    CHECK(spec.model_input == 264);
    CHECK(spec.external_pad() == 7);
    CHECK(spec.stages == 3);
    CHECK(spec.depth() == 15);
  }
  SUBCASE("EffCRN23 hyperparameters") {
    auto spec = spec_for_variant("EffCRN23");
    CHECK(spec.base_filters == 27);
    CHECK(spec.kernel_freq == 4);
    CHECK(spec.model_input == 260);
    CHECK(spec.stages == 5);
    CHECK(spec.use_gru);
    CHECK(spec.clstm_count == 1);
    CHECK(spec.depth() == 23);
  }
  SUBCASE("deeper-only variant keeps the FCRN15 kernels") {
    auto spec = spec_for_variant("FCRN15+D");
    CHECK(spec.base_filters == 32);
    CHECK(spec.kernel_freq == 12);
    CHECK(spec.stages == 5);
    CHECK(spec.model_input == 288);
  }
  SUBCASE("circled-operator spellings parse too") {
    CHECK(spec_for_variant("FCRN15⊖C").clstm_count == 1);
    CHECK(spec_for_variant("FCRN15⊖C⊕G").use_gru);
  }
  SUBCASE("unknown variants and unsupported combinations are rejected") {
    CHECK_THROWS_AS(spec_for_variant("CRUSE4"), ConfigError);
    CHECK_THROWS_AS(spec_for_variant("FCRN15+X"), ConfigError);
    CHECK_THROWS_AS(spec_for_variant("FCRN15+G"), ConfigError);  // G needs -C
    VariantChanges bad;
    bad.in_network_pad = true;  // +P alone has no published figure
    CHECK_THROWS_AS(apply_variant(fcrn15_spec(), bad), ConfigError);
  }
  SUBCASE("empty change set is the identity") {
    auto same = apply_variant(fcrn15_spec(), VariantChanges{});
    CHECK(same == fcrn15_spec());
  }
}

TEST_CASE("parameter accounting matches the closed-form oracle") {
  struct Row {
    const char* variant;
    std::int64_t expected;
  };
  // Oracle totals from unet_params with each variant's hyperparameters.
  const Row rows[] = {
      {"FCRN15", unet_params(32, 12, 3, 2, false, 33)},
      {"FCRN15-C", unet_params(32, 12, 3, 1, false, 33)},
      {"FCRN15-C+G", unet_params(32, 12, 3, 1, true, 33)},
      {"FCRN15+D", unet_params(32, 12, 5, 2, false, 9)},
      {"FCRN15+D+P", unet_params(32, 12, 5, 2, false, 9)},
      {"FCRN15+F", unet_params(27, 4, 3, 2, false, 33)},
      {"FCRN15+F+D+P", unet_params(27, 4, 5, 2, false, 9)},
      {"EffCRN23", unet_params(27, 4, 5, 1, true, 9)},
      {"EffCRN23lite", unet_params(17, 4, 5, 1, true, 9)},
  };
  for (const Row& row : rows) {
    CAPTURE(row.variant);
    auto graph = build_model(row.variant);
    CHECK(graph.count_params() == row.expected);
  }
  // Frozen spot checks of the oracle itself.
  CHECK(unet_params(32, 12, 3, 2, false, 33) == 875394);
  CHECK(unet_params(27, 4, 5, 1, true, 9) == 996599);
  CHECK(unet_params(17, 4, 5, 1, true, 9) == 395949);
  CHECK(unet_params(32, 12, 3, 1, true, 33) == 7470946);
}

TEST_CASE("allocated parameters equal the accounted total") {
  for (const char* variant : {"FCRN15", "EffCRN23", "EffCRN23lite"}) {
    CAPTURE(variant);
    auto graph = build_model(variant);
    Model model(graph, 5);
    CHECK(model.parameter_numel() == graph.count_params());
  }
}

TEST_CASE("single-layer accounting examples") {
  LayerDesc conv{"c", LayerKind::conv, 264, 264, 2, 32, 12, 1, 5, 6,
                 Activation::leaky_relu};
  CHECK(conv.param_count() == 800);

  LayerDesc skip{"s", LayerKind::depthwise_skip, 33, 33, 96, 96, 1, 1, 0, 0,
                 Activation::linear};
  // 33*96 multiply-accumulates -> 6336 FLOPs, plus bias and skip adds
  CHECK(skip.flops_per_frame() == 2 * 33 * 96 + 2 * 33 * 96);

  LayerDesc lstm{"l", LayerKind::conv_lstm, 33, 33, 32, 32, 12, 1, 5, 6,
                 Activation::linear};
  CHECK(lstm.param_count() == 98432);
  CHECK(lstm.param_count() - 4 * 32 == 98304);
}

TEST_CASE("depth accounting") {
  CHECK(build_model("FCRN15").depth() == 15);
  CHECK(build_model("EffCRN23").depth() == 23);
  CHECK(build_model("EffCRN23lite").depth() == 23);
  CHECK(build_model("FCRN15-C").depth() == 14);
}

TEST_CASE("shape symmetry and the linear filter schedule") {
  for (const char* variant : {"FCRN15", "EffCRN23", "FCRN15+D"}) {
    CAPTURE(variant);
    auto graph = build_model(variant);
    const int F = graph.spec.base_filters;
    for (size_t i = 0; i < graph.encoder.size(); ++i) {
      const auto& enc = graph.encoder[i];
      const auto& dec = graph.decoder[graph.decoder.size() - 1 - i];
      CHECK(enc.conv1.out_ch == int(i + 1) * F);
      CHECK(dec.conv.out_ch == int(i + 1) * F);
      // decoder restores the encoder stage's (padded) input size, then the
      // post-crop drops the in-network pad again
      CHECK(dec.conv.out_freq == enc.conv1.in_freq);
      CHECK(dec.conv.out_freq - dec.post_crop ==
            graph.plan.raw_sizes[i]);
      CHECK(enc.down.out_freq == enc.conv1.in_freq / 2);
    }
  }
}

TEST_CASE("flops ordering across the published variants") {
  const auto fcrn15 = build_model("FCRN15").count_flops_per_frame();
  const auto eff23 = build_model("EffCRN23").count_flops_per_frame();
  const auto lite = build_model("EffCRN23lite").count_flops_per_frame();
  CHECK(fcrn15 > eff23);
  CHECK(eff23 > lite);
  const auto p_fcrn15 = build_model("FCRN15").count_params();
  const auto p_lite = build_model("EffCRN23lite").count_params();
  CHECK(double(p_fcrn15) / double(p_lite) == doctest::Approx(2.2).epsilon(0.05));
}

TEST_CASE("variant composition reproduces EffCRN23 structurally") {
  VariantChanges all;
  all.deeper = all.in_network_pad = all.small_filters = true;
  all.drop_second_clstm = all.add_gru = true;
  auto composed = build_graph(apply_variant(fcrn15_spec(), all));
  auto direct = build_model("EffCRN23");
  CHECK(composed.structurally_equal(direct));
  CHECK(composed.layer_table() == direct.layer_table());
  // but not equal to a differently sized variant
  CHECK_FALSE(composed.structurally_equal(build_model("EffCRN23lite")));
}

TEST_CASE("documented hyperparameter overrides") {
  SUBCASE("clstm width override changes the accounting") {
    auto spec = spec_for_variant("FCRN15");
    spec.clstm_hidden = 16;
    auto graph = build_graph(spec);
    CHECK(graph.count_params() < build_model("FCRN15").count_params());
    Model model(graph, 1);
    CHECK(model.parameter_numel() == graph.count_params());
  }
  SUBCASE("gru width must map back onto the bottleneck grid") {
    auto spec = spec_for_variant("EffCRN23");
    spec.gru_hidden = 10;  // bottleneck frequency is 9
    CHECK_THROWS_AS(build_graph(spec), ConfigError);
    spec.gru_hidden = 9 * 8;
    auto graph = build_graph(spec);
    Model model(graph, 1);
    CHECK(model.parameter_numel() == graph.count_params());
  }
  SUBCASE("leaky slope override reaches the forward pass") {
    auto spec = spec_for_variant("FCRN15");
    spec.leaky_slope = 1.0f;  // linear-equivalent
    Model a(build_graph(spec), 9);
    Model b(build_graph(spec_for_variant("FCRN15")), 9);
    std::mt19937 rng(45);
    Tensor frame = Tensor::uniform({257, 1, 2}, 0.5f, rng);
    auto sa = a.make_state(1);
    auto sb = b.make_state(1);
    auto ma = a.forward_frame(VarT<float>(frame), sa, nullptr);
    auto mb = b.forward_frame(VarT<float>(frame), sb, nullptr);
    double diff = 0;
    for (std::int64_t i = 0; i < ma.value.numel(); ++i)
      diff = std::max(diff, std::abs(double(ma.value[i]) - mb.value[i]));
    CHECK(diff > 0);  // same seed, different activation slope
  }
}

TEST_CASE("model forward basics") {
  auto graph = build_model("FCRN15");
  Model model(graph, 7);

  SUBCASE("zero frame with zeroed parameters gives a zero mask") {
    Model zeroed(graph, 7);
    for (auto* p : zeroed.parameters())
      std::fill(p->value.data(), p->value.data() + p->value.numel(), 0.f);
    auto state = zeroed.make_state(1);
    VarT<float> frame(Tensor::zeros({257, 1, 2}));
    auto mask = zeroed.forward_frame(frame, state, nullptr);
    CHECK(mask.value.shape() == Shape{257, 1, 2});
    for (std::int64_t i = 0; i < mask.value.numel(); ++i)
      CHECK(mask.value[i] == 0.f);
  }
  SUBCASE("identical frames after a state reset give identical masks") {
    std::mt19937 rng(43);
    Tensor frame = Tensor::uniform({257, 1, 2}, 0.5f, rng);
    auto s1 = model.make_state(1);
    auto m1 = model.forward_frame(VarT<float>(frame), s1, nullptr);
    auto s2 = model.make_state(1);
    auto m2 = model.forward_frame(VarT<float>(frame), s2, nullptr);
    for (std::int64_t i = 0; i < m1.value.numel(); ++i)
      CHECK(m1.value[i] == m2.value[i]);
  }
  SUBCASE("foreign and mismatched states are rejected") {
    Model other(graph, 8);
    auto state = other.make_state(1);
    VarT<float> frame(Tensor::zeros({257, 1, 2}));
    CHECK_THROWS_AS(model.forward_frame(frame, state, nullptr), UsageError);
    auto state2 = model.make_state(2);
    CHECK_THROWS_AS(model.forward_frame(frame, state2, nullptr), UsageError);
  }
  SUBCASE("wrong frame shape is rejected") {
    auto state = model.make_state(1);
    VarT<float> bad(Tensor::zeros({256, 1, 2}));
    CHECK_THROWS_AS(model.forward_frame(bad, state, nullptr), ShapeError);
  }
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "effcrn_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "m.ckpt").string();

  auto graph = build_model("EffCRN23lite");
  Model model(graph, 11);
  save_checkpoint(model, path, "{\"note\":\"test\"}");

  auto loaded = load_checkpoint(path);
  CHECK(loaded.model->graph().count_params() == graph.count_params());
  CHECK(loaded.model->graph().spec.variant == "EffCRN23lite");

  SUBCASE("parameters and forward passes are bit-identical") {
    auto pa = model.parameters();
    auto pb = loaded.model->parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
      REQUIRE(pa[i]->value.numel() == pb[i]->value.numel());
      for (std::int64_t j = 0; j < pa[i]->value.numel(); ++j)
        CHECK(pa[i]->value[j] == pb[i]->value[j]);
    }
    std::mt19937 rng(44);
    Tensor frame = Tensor::uniform({257, 1, 2}, 0.5f, rng);
    auto sa = model.make_state(1);
    auto sb = loaded.model->make_state(1);
    auto ma = model.forward_frame(VarT<float>(frame), sa, nullptr);
    auto mb = loaded.model->forward_frame(VarT<float>(frame), sb, nullptr);
    for (std::int64_t i = 0; i < ma.value.numel(); ++i)
      CHECK(ma.value[i] == mb.value[i]);
  }
  SUBCASE("truncated checkpoints are rejected") {
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    const std::string cut = (dir / "cut.ckpt").string();
    std::ofstream(cut, std::ios::binary) << data.substr(0, data.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(cut), IoError);
  }
  SUBCASE("bit flips are caught by the checksum") {
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    data[data.size() / 2] = char(data[data.size() / 2] ^ 0x40);
    const std::string bad = (dir / "bad.ckpt").string();
    std::ofstream(bad, std::ios::binary) << data;
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);
  }
}

TEST_CASE("spec json round trip") {
  auto spec = spec_for_variant("EffCRN23");
  auto back = spec_from_json(spec_to_json(spec));
  CHECK(back == spec);
  CHECK_THROWS_AS(spec_from_json("{broken"), IoError);
  CHECK(spec_hash(spec) == spec_hash(back));
  CHECK(spec_hash(spec) != spec_hash(spec_for_variant("EffCRN23lite")));
}
