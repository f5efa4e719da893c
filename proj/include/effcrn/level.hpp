// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>

namespace effcrn {

// Active speech level in dB relative to full scale (dBov), estimated with an
// envelope tracker, activity thresholds with 0.2 s hangover, and the 15.9 dB
// margin. All-silent input raises DataError.
double active_speech_level(std::span<const float> samples, int sample_rate);

// Mean power in dB relative to full scale over the whole signal.
double rms_level_dbov(std::span<const float> samples);

}  // namespace effcrn
