// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>
#include <vector>

namespace effcrn {

// One training mixture: y = speech_gain*s + noise_gain*d, with s leveled to
// the target active speech level and d scaled for the requested SNR against
// the active-speech power.
struct MixtureExample {
  std::vector<float> clean;    // gained speech
  std::vector<float> noise;    // gained noise
  std::vector<float> mixture;  // clean + noise, sample exact
  double speech_gain = 1.0;
  double noise_gain = 1.0;
  double snr_db = 0.0;
  double speech_level_dbov = 0.0;  // after gaining
};

MixtureExample mix_at_snr(std::span<const float> speech,
                          std::span<const float> noise, double snr_db,
                          double target_level_dbov, int sample_rate);

struct DeltaSnr {
  double snr_in_db = 0;
  double snr_out_db = 0;
  double delta_db = 0;
  bool clamped = false;  // zero residual hit the +100 dB clamp
};

// SNR improvement of an enhanced signal; noise is taken as y - s at the input
// and s_hat - s at the output, speech power from the active speech level.
DeltaSnr delta_snr(std::span<const float> clean, std::span<const float> noisy,
                   std::span<const float> enhanced, int sample_rate);

}  // namespace effcrn
