// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/stft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "effcrn/fft.hpp"

namespace effcrn {

FrameConfig make_frame_config(int dft_size, int frame_shift, int sample_rate) {
  EFFCRN_CHECK(dft_size > 0 && (dft_size & (dft_size - 1)) == 0, ConfigError,
               "DFT size must be a power of two");
  EFFCRN_CHECK(frame_shift > 0 && frame_shift <= dft_size, ConfigError,
               "frame shift must be in (0, dft_size]");
  FrameConfig cfg;
  cfg.dft_size = dft_size;
  cfg.frame_shift = frame_shift;
  cfg.sample_rate = sample_rate;
  cfg.window.resize(size_t(dft_size));
  for (int n = 0; n < dft_size; ++n) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / dft_size));
    cfg.window[size_t(n)] = float(std::sqrt(hann));
  }
  return cfg;
}

int num_bins(const FrameConfig& cfg) { return cfg.dft_size / 2 + 1; }

std::int64_t num_frames(std::int64_t num_samples, const FrameConfig& cfg) {
  EFFCRN_CHECK(num_samples > 0, UsageError, "empty signal");
  return (num_samples + cfg.frame_shift - 1) / cfg.frame_shift;
}

void analyze_frame(std::span<const float> frame, const FrameConfig& cfg,
                   float* out) {
  const int K = cfg.dft_size;
  EFFCRN_CHECK(int(frame.size()) == K, UsageError, "frame must hold K samples");
  std::vector<std::complex<double>> buf(static_cast<size_t>(K));
  for (int n = 0; n < K; ++n)
    buf[size_t(n)] = double(frame[size_t(n)]) * double(cfg.window[size_t(n)]);
  fft_inplace(buf, false);
  const int bins = K / 2 + 1;
  for (int k = 0; k < bins; ++k) {
    out[2 * k] = float(buf[size_t(k)].real());
    out[2 * k + 1] = float(buf[size_t(k)].imag());
  }
}

void synthesize_frame(const float* re_im, const FrameConfig& cfg, float* out) {
  const int K = cfg.dft_size;
  const int bins = K / 2 + 1;
  std::vector<std::complex<double>> buf(static_cast<size_t>(K));
  for (int k = 0; k < bins; ++k)
    buf[size_t(k)] = {double(re_im[2 * k]), double(re_im[2 * k + 1])};
  for (int k = bins; k < K; ++k) buf[size_t(k)] = std::conj(buf[size_t(K - k)]);
  fft_inplace(buf, true);
  for (int n = 0; n < K; ++n)
    out[n] = float(buf[size_t(n)].real() * double(cfg.window[size_t(n)]));
}

Tensor stft(std::span<const float> signal, const FrameConfig& cfg) {
  const std::int64_t L = num_frames(std::int64_t(signal.size()), cfg);
  const int K = cfg.dft_size;
  const int R = cfg.frame_shift;
  const int bins = K / 2 + 1;
  Tensor spec = Tensor::zeros({bins, int(L), 2});
  std::vector<float> frame(static_cast<size_t>(K));
  std::vector<float> re_im(static_cast<size_t>(bins) * 2);
  for (std::int64_t l = 0; l < L; ++l) {
    const std::int64_t start = l * R;
    for (int n = 0; n < K; ++n) {
      const std::int64_t idx = start + n;
      frame[size_t(n)] =
          idx < std::int64_t(signal.size()) ? signal[size_t(idx)] : 0.f;
    }
    analyze_frame(frame, cfg, re_im.data());
    for (int k = 0; k < bins; ++k) {
      spec.data()[(std::int64_t(k) * L + l) * 2] = re_im[size_t(2 * k)];
      spec.data()[(std::int64_t(k) * L + l) * 2 + 1] = re_im[size_t(2 * k) + 1];
    }
  }
  return spec;
}

std::vector<float> istft(const Tensor& spec, const FrameConfig& cfg,
                         std::int64_t num_samples) {
  EFFCRN_CHECK(spec.rank() == 3 && spec.dim(0) == num_bins(cfg) &&
                   spec.dim(2) == 2,
               ShapeError, "spectrum must be (K/2+1, L, 2)");
  const int K = cfg.dft_size;
  const int R = cfg.frame_shift;
  const int bins = spec.dim(0);
  const std::int64_t L = spec.dim(1);
  std::vector<float> out(size_t((L - 1) * R + K), 0.f);
  std::vector<float> re_im(static_cast<size_t>(bins) * 2);
  std::vector<float> frame(static_cast<size_t>(K));
  for (std::int64_t l = 0; l < L; ++l) {
    for (int k = 0; k < bins; ++k) {
      re_im[size_t(2 * k)] = spec[(std::int64_t(k) * L + l) * 2];
      re_im[size_t(2 * k) + 1] = spec[(std::int64_t(k) * L + l) * 2 + 1];
    }
    synthesize_frame(re_im.data(), cfg, frame.data());
    for (int n = 0; n < K; ++n) out[size_t(l * R + n)] += frame[size_t(n)];
  }
  if (num_samples >= 0) out.resize(size_t(num_samples), 0.f);
  return out;
}

IstftStream::IstftStream(FrameConfig cfg) : cfg_(std::move(cfg)) {
  overlap_.assign(size_t(cfg_.dft_size - cfg_.frame_shift), 0.f);
  frame_.resize(size_t(cfg_.dft_size));
}

void IstftStream::push(const float* re_im, float* out) {
  const int K = cfg_.dft_size;
  const int R = cfg_.frame_shift;
  synthesize_frame(re_im, cfg_, frame_.data());
  for (int n = 0; n < R; ++n) {
    const float carried = n < K - R ? overlap_[size_t(n)] : 0.f;
    out[n] = carried + frame_[size_t(n)];
  }
  // shift the overlap buffer forward and fold in the new frame's tail
  for (int n = 0; n < K - R; ++n) {
    const float carried = n + R < K - R ? overlap_[size_t(n + R)] : 0.f;
    overlap_[size_t(n)] = carried + frame_[size_t(n + R)];
  }
}

std::vector<float> IstftStream::flush() {
  std::vector<float> tail = overlap_;
  std::fill(overlap_.begin(), overlap_.end(), 0.f);
  return tail;
}

}  // namespace effcrn
