// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "effcrn/tensor.hpp"

namespace effcrn {

// Analysis/synthesis framing: K-point DFT, 50% shift, square-root Hann on
// both sides (their product satisfies constant overlap-add on the interior).
struct FrameConfig {
  int dft_size = 512;
  int frame_shift = 256;
  int sample_rate = 16000;
  std::vector<float> window;  // filled by make_frame_config
};

FrameConfig make_frame_config(int dft_size = 512, int frame_shift = 256,
                              int sample_rate = 16000);

int num_bins(const FrameConfig& cfg);
std::int64_t num_frames(std::int64_t num_samples, const FrameConfig& cfg);

// Spectrum of one windowed K-sample frame, written as (Re, Im) pairs for the
// K/2+1 non-redundant bins.
void analyze_frame(std::span<const float> frame, const FrameConfig& cfg,
                   float* out_re_im);
// Inverse of analyze_frame including the synthesis window: K samples ready
// for overlap-add.
void synthesize_frame(const float* re_im, const FrameConfig& cfg,
                      float* out_frame);

// Full-signal transforms. Frame l covers samples [l*R, l*R+K), the tail is
// zero-extended; returns a (K/2+1, L, 2) tensor.
Tensor stft(std::span<const float> signal, const FrameConfig& cfg);
// Overlap-add synthesis; output is truncated (or zero-padded) to num_samples
// when it is >= 0, else has length (L-1)*R + K.
std::vector<float> istft(const Tensor& spec, const FrameConfig& cfg,
                         std::int64_t num_samples = -1);

// Streaming synthesis: push one spectral frame, collect frame_shift samples.
class IstftStream {
 public:
  explicit IstftStream(FrameConfig cfg);
  // out must hold frame_shift samples.
  void push(const float* re_im, float* out);
  // Remaining K-R tail samples after the last frame.
  std::vector<float> flush();

 private:
  FrameConfig cfg_;
  std::vector<float> overlap_;
  std::vector<float> frame_;
};

}  // namespace effcrn
