// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "effcrn/adam.hpp"
#include "effcrn/grad_check.hpp"
#include "effcrn/level.hpp"
#include "effcrn/loss.hpp"
#include "effcrn/mask.hpp"
#include "effcrn/mixer.hpp"
#include "effcrn/synth.hpp"
#include "effcrn/train.hpp"
#include "test_util.hpp"

using namespace effcrn;

namespace {

std::vector<float> scaled(std::span<const float> x, double g) {
  std::vector<float> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = float(g * x[i]);
  return out;
}

double mean_power(std::span<const float> x) {
  double acc = 0;
  for (float v : x) acc += double(v) * v;
  return acc / double(x.size());
}

}  // namespace

TEST_CASE("compressed loss values") {
  SUBCASE("perfect estimate scores zero") {
    std::mt19937 rng(51);
    Tensor s = Tensor::uniform({257, 4, 2}, 1.f, rng);
    auto j = compressed_loss(VarT<float>(s), VarT<float>(s));
    CHECK(j.value[0] == 0.f);
  }
  SUBCASE("unit magnitude against silence scores one at alpha=0") {
    Tensor est = Tensor::uninitialized({257, 3, 2});
    for (std::int64_t i = 0; i < est.numel() / 2; ++i) {
      est.data()[2 * i] = 1.f;
      est.data()[2 * i + 1] = 0.f;
    }
    Tensor tgt = Tensor::zeros({257, 3, 2});
    LossConfigT<float> cfg;
    cfg.blend = 0.f;
    auto j = compressed_loss(VarT<float>(est), VarT<float>(tgt), cfg);
    // |S|^c on the floored silence is ~1e-4, so J sits just under 1
    CHECK(j.value[0] == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("loss is finite on all-zero bins and positive on mismatch") {
    Tensor est = Tensor::zeros({257, 2, 2});
    Tensor tgt = Tensor::zeros({257, 2, 2});
    auto j = compressed_loss(VarT<float>(est), VarT<float>(tgt));
    CHECK(std::isfinite(j.value[0]));
    CHECK(j.value[0] == 0.f);
    tgt.data()[0] = 0.5f;
    auto j2 = compressed_loss(VarT<float>(est), VarT<float>(tgt));
    CHECK(j2.value[0] > 0.f);
  }
  SUBCASE("shape mismatch is an error") {
    Tensor a = Tensor::zeros({257, 2, 2});
    Tensor b = Tensor::zeros({257, 3, 2});
    CHECK_THROWS_AS(compressed_loss(VarT<float>(a), VarT<float>(b)), UsageError);
  }
  SUBCASE("loss is non-negative and zero only on a match") {
    std::mt19937 rng(54);
    for (int trial = 0; trial < 30; ++trial) {
      Tensor est = Tensor::uniform({33, 2, 2}, 2.f, rng);
      Tensor tgt = Tensor::uniform({33, 2, 2}, 2.f, rng);
      const float j = compressed_loss(VarT<float>(est), VarT<float>(tgt)).value[0];
      CHECK(j >= 0.f);
      CHECK(j > 0.f);  // random pairs differ almost surely
      CHECK(compressed_loss(VarT<float>(est), VarT<float>(est)).value[0] == 0.f);
    }
  }
  SUBCASE("gradient matches finite differences away from the floor") {
    std::mt19937 rng(52);
    ParameterT<double> est("est", TensorT<double>::uniform({9, 2, 2}, 1.0, rng));
    // keep magnitudes >= 1e-3
    for (std::int64_t i = 0; i < est.value.numel(); ++i)
      est.value.data()[i] += est.value[i] >= 0 ? 0.05 : -0.05;
    TensorT<double> tgt = TensorT<double>::uniform({9, 2, 2}, 1.0, rng);
    LossConfigT<double> cfg;
    auto build = [&](TapeT<double>& tape) {
      return compressed_loss(tape.param(est), VarT<double>(tgt), cfg);
    };
    CHECK(grad_check<double>(build, {&est}) < 1e-3);
  }
}

TEST_CASE("active speech level") {
  const int fs = 16000;
  SUBCASE("full-scale square wave sits at 0 dBov") {
    std::vector<float> sq(fs, 0.f);
    for (size_t i = 0; i < sq.size(); ++i) sq[i] = (i / 80) % 2 ? 1.f : -1.f;
    // the envelope rise time excludes a few leading samples, which reads a
    // hair above 0 dBov
    CHECK(std::abs(active_speech_level(sq, fs)) < 0.15);
  }
  SUBCASE("halving the amplitude drops the level by 6.02 dB") {
    auto speech = synth_tonal_speech(1.5, fs, 99);
    const double full = active_speech_level(speech, fs);
    const double half = active_speech_level(scaled(speech, 0.5), fs);
    CHECK(full - half == doctest::Approx(6.02).epsilon(0.02));
  }
  SUBCASE("a burst with 50% silence reads ~3 dB above the full-signal rms") {
    // long tone bursts with hard silence; the hangover and envelope decay
    // keep ~0.3 s per gap counted as active
    std::vector<float> sig(size_t(fs) * 20, 0.f);
    const size_t period = size_t(fs) * 10;  // 5 s on, 5 s off
    for (size_t i = 0; i < sig.size(); ++i) {
      if ((i % period) < period / 2)
        sig[i] = 0.5f * float(std::sin(2.0 * M_PI * 500.0 * double(i) / fs));
    }
    const double active = active_speech_level(sig, fs);
    const double rms = rms_level_dbov(sig);
    CHECK(active - rms > 2.5);
    CHECK(active - rms < 3.02);  // 3.01 dB is the zero-overhead ideal

    // brute-force labeling: a sample is active inside a burst or within the
    // hangover-plus-decay window (~0.31 s) after it
    double energy = 0;
    std::int64_t active_count = 0;
    for (size_t i = 0; i < sig.size(); ++i) {
      energy += double(sig[i]) * sig[i];
      if ((i % period) < period / 2 + size_t(0.31 * fs)) ++active_count;
    }
    const double labeled = 10.0 * std::log10(energy / double(active_count));
    CHECK(active == doctest::Approx(labeled).epsilon(0.02));
  }
  SUBCASE("silence is a data error") {
    std::vector<float> zeros(1000, 0.f);
    CHECK_THROWS_AS(active_speech_level(zeros, fs), DataError);
  }
}

TEST_CASE("snr-controlled mixing") {
  const int fs = 16000;
  auto speech = synth_tonal_speech(1.5, fs, 101);
  auto noise = synth_shaped_noise(1.5, fs, 102);

  SUBCASE("achieved snr matches the request within 0.1 dB") {
    for (double snr : {0.0, 5.0, 10.0}) {
      auto mix = mix_at_snr(speech, noise, snr, -26.0, fs);
      const double s_level = active_speech_level(mix.clean, fs);
      CHECK(s_level == doctest::Approx(-26.0).epsilon(0.01));
      const double achieved =
          s_level - 10.0 * std::log10(mean_power(mix.noise));
      CHECK(achieved == doctest::Approx(snr).epsilon(0.02));
      // y reconstructs exactly from the stored gains
      for (size_t i = 0; i < mix.mixture.size(); ++i)
        CHECK(mix.mixture[i] ==
              float(float(mix.speech_gain * speech[i]) +
                    float(mix.noise_gain * noise[i])));
    }
  }
  SUBCASE("mixing a signal with itself at 0 dB doubles the scaled signal") {
    auto mix = mix_at_snr(speech, speech, 0.0, -26.0, fs);
    // the noise leg gets its own gain; at 0 dB SNR both legs carry the same
    // active power, so y = s' + d' with d' a scaled copy of s
    for (size_t i = 0; i < mix.mixture.size(); ++i)
      CHECK(mix.mixture[i] ==
            doctest::Approx(mix.clean[i] + mix.noise[i]).epsilon(1e-6));
    const double ps = mean_power(mix.clean);
    const double pd = mean_power(mix.noise);
    // identical waveforms: active-power parity implies similar mean power
    CHECK(10.0 * std::log10(ps / pd) == doctest::Approx(0.0).epsilon(0.1));
  }
  SUBCASE("silent inputs are data errors") {
    std::vector<float> zeros(8000, 0.f);
    CHECK_THROWS_AS(mix_at_snr(zeros, noise, 0, -26, fs), DataError);
    CHECK_THROWS_AS(mix_at_snr(speech, zeros, 0, -26, fs), DataError);
  }
}

TEST_CASE("delta snr") {
  const int fs = 16000;
  auto speech = synth_tonal_speech(1.5, fs, 103);
  auto noise = synth_shaped_noise(1.5, fs, 104);
  auto mix = mix_at_snr(speech, noise, 5.0, -26.0, fs);

  SUBCASE("no enhancement means zero improvement") {
    auto d = delta_snr(mix.clean, mix.mixture, mix.mixture, fs);
    CHECK(d.delta_db == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("halving the residual amplitude wins 6.02 dB") {
    std::vector<float> halfway(mix.mixture.size());
    for (size_t i = 0; i < halfway.size(); ++i)
      halfway[i] = mix.clean[i] + 0.5f * (mix.mixture[i] - mix.clean[i]);
    auto d = delta_snr(mix.clean, mix.mixture, halfway, fs);
    CHECK(d.delta_db == doctest::Approx(6.02).epsilon(0.01));
    CHECK_FALSE(d.clamped);
  }
  SUBCASE("a perfect estimate hits the clamp and is flagged") {
    auto d = delta_snr(mix.clean, mix.mixture, mix.clean, fs);
    CHECK(d.clamped);
    CHECK(d.snr_out_db == doctest::Approx(100.0));
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters untouched") {
    std::mt19937 rng(53);
    ParameterT<float> p("p", Tensor::uniform({8}, 1.f, rng));
    Tensor before = p.value.clone();
    Adam adam({&p});
    p.zero_grad();
    adam.step();
    for (std::int64_t i = 0; i < p.value.numel(); ++i)
      CHECK(p.value[i] == before[i]);
  }
  SUBCASE("a constant gradient moves parameters by ~lr after bias correction") {
    ParameterT<float> p("p", Tensor::zeros({4}));
    AdamConfig cfg;
    cfg.lr = 0.1f;
    Adam adam({&p}, cfg);
    std::fill(p.grad.data(), p.grad.data() + 4, 1.f);
    adam.step();
    for (int i = 0; i < 4; ++i)
      CHECK(p.value[i] == doctest::Approx(-0.1f).epsilon(1e-3));
  }
}

TEST_CASE("manifest parsing") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "effcrn_manifest_test";
  fs::create_directories(dir);
  const std::string path = (dir / "m.tsv").string();

  SUBCASE("comments, blanks, and relative paths") {
    std::ofstream(path) << "# header\n\nclean/a.wav noise/b.wav 5 train\n"
                        << "clean/c.wav noise/d.wav -2.5 val\n";
    auto entries = load_manifest(path);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].snr_db == 5.0);
    CHECK(entries[0].split == "train");
    CHECK(entries[1].snr_db == -2.5);
    const bool resolved =
        fs::path(entries[0].clean).is_absolute() ||
        entries[0].clean.find("effcrn_manifest_test") != std::string::npos;
    CHECK(resolved);
  }
  SUBCASE("errors carry the line number") {
    std::ofstream(path) << "clean/a.wav noise/b.wav 5 train\nbroken line\n";
    try {
      load_manifest(path);
      FAIL("expected UsageError");
    } catch (const UsageError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("bad snr and bad split name the line") {
    std::ofstream(path) << "a.wav b.wav notanumber train\n";
    CHECK_THROWS_AS(load_manifest(path), UsageError);
    std::ofstream(path) << "a.wav b.wav 3 test\n";
    CHECK_THROWS_AS(load_manifest(path), UsageError);
  }
}

TEST_CASE("full-model bptt gradient on a reduced topology") {
  // Same layer zoo as the real networks, shrunk so the double-precision
  // finite-difference sweep stays fast.
  ModelSpec spec;
  spec.variant = "tiny";
  spec.base_filters = 3;
  spec.kernel_freq = 4;
  spec.input_bins = 11;
  spec.model_input = 12;
  spec.stages = 2;
  spec.padding = PaddingPolicy::in_network;
  spec.clstm_count = 1;
  spec.use_gru = true;
  ModelT<double> model(build_graph(spec), 55);

  std::mt19937 rng(56);
  TensorT<double> frames = TensorT<double>::uniform({1, 11, 3, 2}, 0.7, rng);
  TensorT<double> target = TensorT<double>::uniform({1, 11, 3, 2}, 0.7, rng);
  auto build = [&](TapeT<double>& tape) {
    auto state = model.make_state(1);
    VarT<double> y(frames);
    auto mask = model.forward_sequence(y, state, &tape);
    auto est = bound_and_apply_mask(mask, y);
    return compressed_loss(est, VarT<double>(target), LossConfigT<double>{});
  };
  GradCheckOptions<double> opt;
  opt.max_checks_per_param = 3;
  // the tighter step keeps the difference quotient off leaky-relu kinks
  opt.eps_scale = 1e-5;
  CHECK(grad_check<double>(build, model.parameters(), opt) < 5e-3);
}

TEST_CASE("overfit smoke: a few steps reduce the loss") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "effcrn_train_smoke";
  fs::remove_all(dir);
  const std::string manifest = make_synthetic_corpus(dir.string(), 2, 77, 0.9);

  ModelSpec spec = spec_for_variant("EffCRN23lite");
  Model model(build_graph(spec), 77);
  TrainConfig cfg;
  cfg.sequence_frames = 25;
  cfg.batch_size = 2;
  cfg.lr = 1e-3f;
  cfg.max_steps = 12;
  cfg.max_epochs = 100;
  cfg.seed = 9;
  auto result = train(model, manifest, cfg);
  CHECK(result.total_steps == 12);
  CHECK(result.stop_reason == "max_steps");
  CHECK(result.last_step_loss < result.first_step_loss);
}

TEST_CASE("training is deterministic for a fixed seed") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "effcrn_train_det";
  fs::remove_all(dir);
  const std::string manifest = make_synthetic_corpus(dir.string(), 2, 11, 0.9);

  auto run_once = [&]() {
    ModelSpec spec = spec_for_variant("EffCRN23lite");
    Model model(build_graph(spec), 3);
    TrainConfig cfg;
    cfg.sequence_frames = 20;
    cfg.batch_size = 2;
    cfg.max_steps = 2;
    cfg.seed = 5;
    return train(model, manifest, cfg).first_step_loss;
  };
  const double a = run_once();
  const double b = run_once();
  CHECK(a == doctest::Approx(b).epsilon(1e-9));
}

TEST_CASE("streaming file enhancement matches the in-memory path") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "effcrn_enhance_eq";
  fs::create_directories(dir);
  const auto fcfg = make_frame_config();

  std::mt19937 rng(61);
  std::uniform_real_distribution<float> dist(-0.4f, 0.4f);
  std::vector<float> noisy(16000 + 123);  // off-hop length on purpose
  for (auto& v : noisy) v = dist(rng);
  const std::string in_path = (dir / "in.wav").string();
  write_wav(in_path, noisy, fcfg.sample_rate, WavFormat::float32);

  Model model(build_model("EffCRN23lite"), 13);
  auto direct = enhance_samples(model, noisy, fcfg);

  const std::string out_path = (dir / "out.wav").string();
  auto stats = enhance_wav(model, in_path, out_path, WavFormat::float32);
  auto streamed = read_wav(out_path);

  REQUIRE(streamed.size() == noisy.size());
  CHECK(stats.frames == num_frames(std::int64_t(noisy.size()), fcfg));
  double scale = 1e-6;
  for (float v : direct) scale = std::max(scale, double(std::abs(v)));
  double worst = 0;
  for (size_t i = 0; i < direct.size(); ++i)
    worst = std::max(worst,
                     std::abs(double(streamed[i]) - direct[i]) / scale);
  CHECK(worst < 1e-5);
}

TEST_CASE("empty and unusable manifests are usage errors") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "effcrn_train_empty";
  fs::create_directories(dir);
  const std::string path = (dir / "empty.tsv").string();
  std::ofstream(path) << "# nothing\n";
  Model model(build_model("EffCRN23lite"), 1);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(model, path, cfg), UsageError);
}
