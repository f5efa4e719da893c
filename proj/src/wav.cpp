// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "effcrn/error.hpp"

namespace effcrn {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(std::ifstream& f) {
  unsigned char buf[sizeof(T)];
  f.read(reinterpret_cast<char*>(buf), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= T(buf[i]) << (8 * i);
  return v;
}

template <typename T>
void write_le(std::ofstream& f, T v) {
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  f.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

}  // namespace

WavReader::WavReader(const std::string& path) : file_(path, std::ios::binary) {
  EFFCRN_CHECK(file_.good(), IoError, "cannot open '" + path + "'");
  char tag[4];
  file_.read(tag, 4);
  EFFCRN_CHECK(file_.good() && std::memcmp(tag, "RIFF", 4) == 0, IoError,
               "'" + path + "' is not a RIFF file");
  (void)read_le<std::uint32_t>(file_);
  file_.read(tag, 4);
  EFFCRN_CHECK(file_.good() && std::memcmp(tag, "WAVE", 4) == 0, IoError,
               "'" + path + "' is not a WAVE file");

  std::uint16_t fmt_code = 0, bits = 0;
  bool have_fmt = false;
  while (file_.good()) {
    file_.read(tag, 4);
    if (!file_.good()) break;
    const std::uint32_t size = read_le<std::uint32_t>(file_);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      fmt_code = read_le<std::uint16_t>(file_);
      info_.channels = read_le<std::uint16_t>(file_);
      info_.sample_rate = int(read_le<std::uint32_t>(file_));
      (void)read_le<std::uint32_t>(file_);  // byte rate
      (void)read_le<std::uint16_t>(file_);  // block align
      bits = read_le<std::uint16_t>(file_);
      if (size > 16) {
        if (fmt_code == kFormatExtensible && size >= 40) {
          (void)read_le<std::uint16_t>(file_);  // extension size
          (void)read_le<std::uint16_t>(file_);  // valid bits
          (void)read_le<std::uint32_t>(file_);  // channel mask
          fmt_code = read_le<std::uint16_t>(file_);
          file_.seekg(size - 16 - 10, std::ios::cur);
        } else {
          file_.seekg(size - 16, std::ios::cur);
        }
      }
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      EFFCRN_CHECK(have_fmt, IoError, "'" + path + "': data before fmt chunk");
      const int bytes_per_sample = bits / 8;
      EFFCRN_CHECK(info_.channels >= 1 && bytes_per_sample >= 1, IoError,
                   "'" + path + "': malformed fmt chunk");
      if (fmt_code == kFormatPcm && bits == 16)
        info_.format = WavFormat::pcm16;
      else if (fmt_code == kFormatFloat && bits == 32)
        info_.format = WavFormat::float32;
      else
        throw IoError("'" + path + "': unsupported WAV encoding (need PCM16 " +
                      "or 32-bit float, got format " + std::to_string(fmt_code) +
                      ", " + std::to_string(bits) + " bits)");
      info_.num_frames = std::int64_t(size) / (bytes_per_sample * info_.channels);
      frames_left_ = info_.num_frames;
      return;  // positioned at the sample data
    } else {
      file_.seekg(size + (size & 1), std::ios::cur);
    }
  }
  throw IoError("'" + path + "': no data chunk found");
}

std::int64_t WavReader::read(float* dst, std::int64_t max_frames) {
  const std::int64_t want = std::min(max_frames, frames_left_);
  if (want <= 0) return 0;
  const int ch = info_.channels;
  std::int64_t done = 0;
  if (info_.format == WavFormat::pcm16) {
    std::vector<std::int16_t> buf(size_t(want) * ch);
    file_.read(reinterpret_cast<char*>(buf.data()),
               std::streamsize(buf.size() * 2));
    done = file_.gcount() / (2 * ch);
    for (std::int64_t i = 0; i < done; ++i) {
      double acc = 0;
      for (int c = 0; c < ch; ++c) acc += buf[size_t(i * ch + c)];
      dst[i] = float(acc / (ch * 32768.0));
    }
  } else {
    std::vector<float> buf(size_t(want) * ch);
    file_.read(reinterpret_cast<char*>(buf.data()),
               std::streamsize(buf.size() * 4));
    done = file_.gcount() / (4 * ch);
    for (std::int64_t i = 0; i < done; ++i) {
      double acc = 0;
      for (int c = 0; c < ch; ++c) acc += buf[size_t(i * ch + c)];
      dst[i] = float(acc / ch);
    }
  }
  frames_left_ -= done;
  return done;
}

WavWriter::WavWriter(const std::string& path, int sample_rate, WavFormat format)
    : file_(path, std::ios::binary), format_(format) {
  EFFCRN_CHECK(file_.good(), IoError, "cannot create '" + path + "'");
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const std::uint16_t code =
      format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat;
  file_.write("RIFF", 4);
  write_le<std::uint32_t>(file_, 0);  // fixed up on close
  file_.write("WAVE", 4);
  file_.write("fmt ", 4);
  write_le<std::uint32_t>(file_, 16);
  write_le<std::uint16_t>(file_, code);
  write_le<std::uint16_t>(file_, 1);
  write_le<std::uint32_t>(file_, std::uint32_t(sample_rate));
  write_le<std::uint32_t>(file_, std::uint32_t(sample_rate * bits / 8));
  write_le<std::uint16_t>(file_, bits / 8);
  write_le<std::uint16_t>(file_, bits);
  file_.write("data", 4);
  write_le<std::uint32_t>(file_, 0);  // fixed up on close
  open_ = true;
}

WavWriter::~WavWriter() {
  try {
    close();
  } catch (...) {
    // best effort on teardown
  }
}

void WavWriter::write(std::span<const float> samples) {
  EFFCRN_CHECK(open_, UsageError, "write after close");
  if (format_ == WavFormat::pcm16) {
    std::vector<std::int16_t> buf(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
      const float scaled = std::round(samples[i] * 32768.f);
      buf[i] = std::int16_t(std::clamp(scaled, -32768.f, 32767.f));
    }
    file_.write(reinterpret_cast<const char*>(buf.data()),
                std::streamsize(buf.size() * 2));
  } else {
    file_.write(reinterpret_cast<const char*>(samples.data()),
                std::streamsize(samples.size() * 4));
  }
  frames_ += std::int64_t(samples.size());
}

void WavWriter::close() {
  if (!open_) return;
  open_ = false;
  const int bytes = format_ == WavFormat::pcm16 ? 2 : 4;
  const std::uint32_t data_size = std::uint32_t(frames_ * bytes);
  file_.seekp(4);
  write_le<std::uint32_t>(file_, 36 + data_size);
  file_.seekp(40);
  write_le<std::uint32_t>(file_, data_size);
  file_.close();
  EFFCRN_CHECK(file_.good(), IoError, "failed to finalize WAV file");
}

std::vector<float> read_wav(const std::string& path, WavInfo* info) {
  WavReader reader(path);
  if (info) *info = reader.info();
  std::vector<float> out(size_t(reader.info().num_frames));
  const std::int64_t got = reader.read(out.data(), reader.info().num_frames);
  out.resize(size_t(got));
  return out;
}

std::vector<float> read_wav_checked(const std::string& path,
                                    int expected_rate) {
  WavInfo info;
  std::vector<float> samples = read_wav(path, &info);
  EFFCRN_CHECK(info.sample_rate == expected_rate, UsageError,
               "'" + path + "' is sampled at " +
                   std::to_string(info.sample_rate) + " Hz, expected " +
                   std::to_string(expected_rate) + " Hz (no resampling)");
  EFFCRN_CHECK(info.channels == 1, UsageError,
               "'" + path + "' has " + std::to_string(info.channels) +
                   " channels, expected mono");
  return samples;
}

void write_wav(const std::string& path, std::span<const float> samples,
               int sample_rate, WavFormat format) {
  WavWriter writer(path, sample_rate, format);
  writer.write(samples);
  writer.close();
}

}  // namespace effcrn
