// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace effcrn {

enum class WavFormat { pcm16, float32 };

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  WavFormat format = WavFormat::pcm16;
  std::int64_t num_frames = 0;
};

// Chunked RIFF/WAVE reader for PCM16 and 32-bit float files. Samples come
// back as floats in [-1, 1] (PCM16 scaled by 1/32768).
class WavReader {
 public:
  explicit WavReader(const std::string& path);
  const WavInfo& info() const { return info_; }
  // Reads up to max_frames sample frames; returns the number read.
  std::int64_t read(float* dst, std::int64_t max_frames);

 private:
  std::ifstream file_;
  WavInfo info_;
  std::int64_t frames_left_ = 0;
};

// Streaming writer; the header is fixed up on close (also run by the dtor).
class WavWriter {
 public:
  WavWriter(const std::string& path, int sample_rate, WavFormat format);
  ~WavWriter();
  void write(std::span<const float> samples);
  void close();

 private:
  std::ofstream file_;
  WavFormat format_;
  std::int64_t frames_ = 0;
  bool open_ = false;
};

std::vector<float> read_wav(const std::string& path, WavInfo* info = nullptr);
// Reads and checks the mono/sample-rate contract in one go.
std::vector<float> read_wav_checked(const std::string& path,
                                    int expected_rate);
void write_wav(const std::string& path, std::span<const float> samples,
               int sample_rate, WavFormat format = WavFormat::pcm16);

}  // namespace effcrn
