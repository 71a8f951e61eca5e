// Copyright 2026 The stylevc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stylevc/audio.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "stylevc/errors.hpp"

namespace stylevc {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

struct ParsedHeader {
  WavInfo info;
  std::uint64_t data_offset = 0;
  std::uint64_t data_bytes = 0;
};

ParsedHeader parse_header(std::ifstream& in, const std::string& path) {
  unsigned char riff[12];
  if (!in.read(reinterpret_cast<char*>(riff), 12) || std::memcmp(riff, "RIFF", 4) != 0 ||
      std::memcmp(riff + 8, "WAVE", 4) != 0)
    throw IoError(path + ": not a RIFF/WAVE file");

  ParsedHeader h;
  bool have_fmt = false;
  std::uint16_t format = 0;
  while (true) {
    unsigned char chunk[8];
    if (!in.read(reinterpret_cast<char*>(chunk), 8)) break;
    const std::uint32_t size = le32(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      std::vector<unsigned char> fmt(size);
      if (size < 16 || !in.read(reinterpret_cast<char*>(fmt.data()), size))
        throw IoError(path + ": truncated fmt chunk");
      format = le16(fmt.data());
      h.info.channels = le16(fmt.data() + 2);
      h.info.sample_rate = static_cast<int>(le32(fmt.data() + 4));
      h.info.bits_per_sample = le16(fmt.data() + 14);
      if (format == kFormatExtensible && size >= 26) format = le16(fmt.data() + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw IoError(path + ": data chunk before fmt chunk");
      h.data_offset = static_cast<std::uint64_t>(in.tellg());
      h.data_bytes = size;
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || h.data_offset == 0) throw IoError(path + ": missing fmt or data chunk");
  if (format != kFormatPcm && format != kFormatFloat)
    throw IoError(path + ": unsupported WAV format tag " + std::to_string(format));
  h.info.is_float = format == kFormatFloat;
  const int bps = h.info.bits_per_sample;
  const bool ok_bits = h.info.is_float ? (bps == 32 || bps == 64)
                                       : (bps == 8 || bps == 16 || bps == 24 || bps == 32);
  if (!ok_bits || h.info.channels <= 0 || h.info.sample_rate <= 0)
    throw IoError(path + ": unsupported sample layout");
  // Some writers leave the data size at 0 or 0xFFFFFFFF when streaming.
  in.seekg(0, std::ios::end);
  const std::uint64_t available = static_cast<std::uint64_t>(in.tellg()) - h.data_offset;
  if (h.data_bytes == 0 || h.data_bytes > available) h.data_bytes = available;
  const std::uint64_t frame_bytes = static_cast<std::uint64_t>(bps / 8) * h.info.channels;
  h.info.frames = h.data_bytes / frame_bytes;
  return h;
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 50; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-12 * sum) break;
  }
  return sum;
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) throw ValidationError("waveform sample_rate must be positive");
  if (samples.empty()) throw ValidationError("waveform is empty");
  for (float s : samples)
    if (!std::isfinite(s)) throw ValidationError("waveform contains non-finite samples");
}

WavInfo probe_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return parse_header(in, path).info;
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const ParsedHeader h = parse_header(in, path);
  in.seekg(static_cast<std::streamoff>(h.data_offset));
  const int channels = h.info.channels;
  const int bytes = h.info.bits_per_sample / 8;
  std::vector<unsigned char> raw(h.info.frames * channels * bytes);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw IoError(path + ": truncated data chunk");

  Waveform w;
  w.sample_rate = h.info.sample_rate;
  w.samples.resize(h.info.frames);
  const unsigned char* p = raw.data();
  for (std::uint64_t i = 0; i < h.info.frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c, p += bytes) {
      double v = 0.0;
      if (h.info.is_float) {
        if (bytes == 4) {
          float f;
          std::memcpy(&f, p, 4);
          v = f;
        } else {
          double d;
          std::memcpy(&d, p, 8);
          v = d;
        }
      } else if (bytes == 1) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bytes == 2) {
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else if (bytes == 3) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(le32(p)) / 2147483648.0;
      }
      acc += v;
    }
    w.samples[i] = static_cast<float>(channels == 1 ? acc : acc / channels);
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw ValidationError("cannot write WAV with non-positive sample rate");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  auto put32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put16 = [&](std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
  };
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(kFormatPcm);
  put16(1);
  put32(static_cast<std::uint32_t>(w.sample_rate));
  put32(static_cast<std::uint32_t>(w.sample_rate * 2));
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(data_bytes);
  std::vector<std::int16_t> pcm(w.samples.size());
  for (std::size_t i = 0; i < pcm.size(); ++i) {
    const double v = std::clamp(static_cast<double>(w.samples[i]), -1.0, 1.0);
    pcm[i] = static_cast<std::int16_t>(std::lround(v * 32767.0));
  }
  for (std::int16_t s : pcm) put16(static_cast<std::uint16_t>(s));
  if (!out) throw IoError("write failed for " + path);
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ValidationError("target sample rate must be positive");
  if (w.sample_rate <= 0) throw ValidationError("source sample rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const int g = std::gcd(w.sample_rate, target_rate);
  const std::int64_t up = target_rate / g;
  const std::int64_t down = w.sample_rate / g;
  // Cutoff relative to the input Nyquist; a little roll-off margin keeps
  // aliasing below the Kaiser sidelobe level.
  const double cutoff = 0.95 * std::min(1.0, static_cast<double>(up) / down);
  constexpr int kZeros = 16;
  const double beta = 8.6;
  const int half = static_cast<int>(std::ceil(kZeros / cutoff));
  const double i0_beta = bessel_i0(beta);

  // phase p covers output positions whose source time has fractional part p/up.
  std::vector<std::vector<double>> table(up, std::vector<double>(2 * half));
  for (std::int64_t p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / up;
    for (int k = 0; k < 2 * half; ++k) {
      const double t = (k - half + 1) - frac;  // tap offset in input samples
      const double x = cutoff * t;
      const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
      const double r = t / half;
      const double win = std::abs(r) >= 1.0 ? 0.0 : bessel_i0(beta * std::sqrt(1.0 - r * r)) / i0_beta;
      table[p][k] = cutoff * sinc * win;
    }
  }

  const std::int64_t n_in = static_cast<std::int64_t>(w.samples.size());
  const std::int64_t n_out = (n_in * up + down - 1) / down;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t num = j * down;  // source time = num / up
    const std::int64_t base = num / up;
    const std::int64_t phase = num % up;
    const auto& taps = table[phase];
    double acc = 0.0;
    for (int k = 0; k < 2 * half; ++k) {
      const std::int64_t idx = base + k - half + 1;
      if (idx < 0 || idx >= n_in) continue;
      acc += taps[k] * w.samples[idx];
    }
    out.samples[j] = static_cast<float>(acc);
  }
  return out;
}

Waveform load_and_resample(const std::string& path, int target_rate) {
  Waveform w = read_wav(path);
  if (w.samples.empty()) throw ValidationError(path + ": zero-length audio");
  w = resample(w, target_rate);
  w.validate();
  return w;
}

}  // namespace stylevc
