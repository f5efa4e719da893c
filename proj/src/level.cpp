// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/level.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include "effcrn/error.hpp"

namespace effcrn {

namespace {

constexpr double kMarginDb = 15.9;
constexpr double kSmoothingTime = 0.03;  // seconds
constexpr double kHangoverTime = 0.2;    // seconds
constexpr int kNumThresholds = 16;       // full scale down by 6 dB steps

}  // namespace

double rms_level_dbov(std::span<const float> samples) {
  EFFCRN_CHECK(!samples.empty(), DataError, "empty signal");
  double energy = 0;
  for (float s : samples) energy += double(s) * double(s);
  EFFCRN_CHECK(energy > 0, DataError, "all-silent signal");
  return 10.0 * std::log10(energy / double(samples.size()));
}

double active_speech_level(std::span<const float> samples, int sample_rate) {
  EFFCRN_CHECK(!samples.empty(), DataError, "empty signal");
  const double g = std::exp(-1.0 / (sample_rate * kSmoothingTime));
  const std::int64_t hang = std::int64_t(kHangoverTime * sample_rate);

  double energy = 0;
  double p = 0, q = 0;
  std::vector<std::int64_t> activity(kNumThresholds, 0);
  std::vector<std::int64_t> hangover(kNumThresholds, hang);
  for (float sample : samples) {
    const double x = double(sample);
    energy += x * x;
    p = g * p + (1.0 - g) * std::abs(x);
    q = g * q + (1.0 - g) * p;
    double threshold = 1.0;
    for (int j = 0; j < kNumThresholds; ++j, threshold *= 0.5) {
      if (q >= threshold) {
        ++activity[size_t(j)];
        hangover[size_t(j)] = 0;
      } else if (hangover[size_t(j)] < hang) {
        ++activity[size_t(j)];
        ++hangover[size_t(j)];
      }
    }
  }
  EFFCRN_CHECK(energy > 0, DataError, "all-silent signal");

  double prev_delta = 0, prev_level = 0;
  bool have_prev = false;
  double threshold = 1.0;
  for (int j = 0; j < kNumThresholds; ++j, threshold *= 0.5) {
    if (activity[size_t(j)] == 0) continue;
    const double level = 10.0 * std::log10(energy / double(activity[size_t(j)]));
    const double delta = level - 20.0 * std::log10(threshold);
    if (delta >= kMarginDb) {
      if (!have_prev || delta == prev_delta) return level;
      const double frac = (kMarginDb - prev_delta) / (delta - prev_delta);
      return prev_level + (level - prev_level) * frac;
    }
    prev_delta = delta;
    prev_level = level;
    have_prev = true;
  }
  // Quiet signal: every threshold stayed close to the envelope; fall back to
  // the most permissive measurement.
  EFFCRN_CHECK(have_prev, DataError, "no speech activity found");
  return prev_level;
}

}  // namespace effcrn
