// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/mixer.hpp"

#include <cmath>

#include "effcrn/error.hpp"
#include "effcrn/level.hpp"

namespace effcrn {

namespace {

double mean_power(std::span<const float> x) {
  double acc = 0;
  for (float v : x) acc += double(v) * double(v);
  return acc / double(x.size());
}

}  // namespace

MixtureExample mix_at_snr(std::span<const float> speech,
                          std::span<const float> noise, double snr_db,
                          double target_level_dbov, int sample_rate) {
  EFFCRN_CHECK(!speech.empty(), DataError, "empty speech signal");
  EFFCRN_CHECK(!noise.empty(), DataError, "empty noise signal");

  const double level = active_speech_level(speech, sample_rate);  // DataError if silent
  const double noise_power = mean_power(noise);
  EFFCRN_CHECK(noise_power > 0, DataError, "all-silent noise signal");

  MixtureExample out;
  out.snr_db = snr_db;
  out.speech_gain = std::pow(10.0, (target_level_dbov - level) / 20.0);
  out.speech_level_dbov = target_level_dbov;

  // Active-speech power after gaining, versus full-length noise power.
  const double speech_power = std::pow(10.0, target_level_dbov / 10.0);
  const double wanted_noise_power = speech_power / std::pow(10.0, snr_db / 10.0);
  out.noise_gain = std::sqrt(wanted_noise_power / noise_power);

  const size_t n = speech.size();
  out.clean.resize(n);
  out.noise.resize(n);
  out.mixture.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const float d = i < noise.size() ? noise[i] : 0.f;
    out.clean[i] = float(out.speech_gain * speech[i]);
    out.noise[i] = float(out.noise_gain * d);
    out.mixture[i] = out.clean[i] + out.noise[i];
  }
  return out;
}

DeltaSnr delta_snr(std::span<const float> clean, std::span<const float> noisy,
                   std::span<const float> enhanced, int sample_rate) {
  EFFCRN_CHECK(clean.size() == noisy.size() && clean.size() == enhanced.size(),
               UsageError, "delta_snr needs aligned equal-length signals");
  const double speech_db = active_speech_level(clean, sample_rate);

  auto residual_power = [&](std::span<const float> x) {
    double acc = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      const double r = double(x[i]) - double(clean[i]);
      acc += r * r;
    }
    return acc / double(x.size());
  };

  constexpr double kClampDb = 100.0;
  DeltaSnr out;
  const double p_in = residual_power(noisy);
  const double p_out = residual_power(enhanced);
  out.snr_in_db = p_in > 0 ? speech_db - 10.0 * std::log10(p_in) : kClampDb;
  out.snr_out_db = p_out > 0 ? speech_db - 10.0 * std::log10(p_out) : kClampDb;
  out.clamped = p_in <= 0 || p_out <= 0;
  if (out.snr_in_db > kClampDb) out.snr_in_db = kClampDb;
  if (out.snr_out_db > kClampDb) out.snr_out_db = kClampDb;
  out.delta_db = out.snr_out_db - out.snr_in_db;
  return out;
}

}  // namespace effcrn
