// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

namespace effcrn {

// Writes a small self-contained corpus for smoke runs: tonal "speech"
// utterances with pauses, shaped-noise interferers, and a manifest cycling
// the 0/5/10 dB SNR conditions. Returns the manifest path.
std::string make_synthetic_corpus(const std::string& dir, int num_utterances,
                                  unsigned seed, double seconds = 1.8,
                                  int sample_rate = 16000);

// The raw generators, also used by tests.
std::vector<float> synth_tonal_speech(double seconds, int sample_rate,
                                      unsigned seed);
std::vector<float> synth_shaped_noise(double seconds, int sample_rate,
                                      unsigned seed);

}  // namespace effcrn
