// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "effcrn/error.hpp"
#include "effcrn/wav.hpp"

namespace effcrn {

std::vector<float> synth_tonal_speech(double seconds, int sample_rate,
                                      unsigned seed) {
  std::mt19937 rng(seed);
  const auto n = std::int64_t(seconds * sample_rate);
  std::vector<float> out(static_cast<size_t>(n), 0.f);
  std::uniform_real_distribution<double> freq_pick(180.0, 2500.0);
  std::uniform_real_distribution<double> dur_pick(0.12, 0.35);
  std::uniform_real_distribution<double> gap_pick(0.04, 0.18);
  std::uniform_real_distribution<double> amp_pick(0.4, 0.9);
  std::int64_t pos = 0;
  while (pos < n) {
    const auto burst = std::int64_t(dur_pick(rng) * sample_rate);
    const double f0 = freq_pick(rng);
    const double f1 = f0 * (1.5 + 0.7 * amp_pick(rng));
    const double amp = amp_pick(rng);
    for (std::int64_t i = 0; i < burst && pos + i < n; ++i) {
      const double t = double(i) / sample_rate;
      const double ramp = std::min({1.0, double(i) / 160.0,
                                    double(burst - 1 - i) / 160.0});
      out[size_t(pos + i)] = float(
          amp * ramp *
          (0.7 * std::sin(2.0 * M_PI * f0 * t) +
           0.3 * std::sin(2.0 * M_PI * f1 * t)));
    }
    pos += burst + std::int64_t(gap_pick(rng) * sample_rate);
  }
  return out;
}

std::vector<float> synth_shaped_noise(double seconds, int sample_rate,
                                      unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> white(0.0, 1.0);
  const auto n = std::int64_t(seconds * sample_rate);
  std::vector<float> out(static_cast<size_t>(n));
  // one-pole lowpass shaping; keeps most energy below ~2 kHz
  const double a = 0.65;
  double state = 0.0;
  double peak = 1e-9;
  for (std::int64_t i = 0; i < n; ++i) {
    state = a * state + (1.0 - a) * white(rng);
    out[size_t(i)] = float(state);
    peak = std::max(peak, std::abs(state));
  }
  for (auto& v : out) v = float(0.5 * v / peak);
  return out;
}

std::string make_synthetic_corpus(const std::string& dir, int num_utterances,
                                  unsigned seed, double seconds,
                                  int sample_rate) {
  EFFCRN_CHECK(num_utterances >= 1, UsageError, "need at least one utterance");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "clean");
  fs::create_directories(fs::path(dir) / "noise");
  const fs::path manifest_path = fs::path(dir) / "manifest.tsv";
  std::ofstream manifest(manifest_path);
  EFFCRN_CHECK(manifest.good(), IoError,
               "cannot create '" + manifest_path.string() + "'");
  manifest << "# clean noise snr_db split\n";
  const double snrs[3] = {0.0, 5.0, 10.0};
  for (int i = 0; i < num_utterances; ++i) {
    const std::string utt = "clean/utt_" + std::to_string(i) + ".wav";
    const std::string noi = "noise/noise_" + std::to_string(i) + ".wav";
    auto speech = synth_tonal_speech(seconds, sample_rate, seed + 131u * i);
    auto noise = synth_shaped_noise(seconds, sample_rate, seed + 131u * i + 7u);
    write_wav((fs::path(dir) / utt).string(), speech, sample_rate);
    write_wav((fs::path(dir) / noi).string(), noise, sample_rate);
    manifest << utt << ' ' << noi << ' ' << snrs[i % 3] << " train\n";
  }
  manifest.close();
  return manifest_path.string();
}

}  // namespace effcrn
