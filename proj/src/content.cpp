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

#include "stylevc/content.hpp"

#include <atomic>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <ATen/CPUGeneratorImpl.h>
#include <unistd.h>

#include "stylevc/errors.hpp"

namespace stylevc {
namespace {

namespace fs = std::filesystem;


void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace

torch::Tensor align_frames(const torch::Tensor& values, std::int64_t frames) {
  const std::int64_t have = values.size(0);
  if (have == frames) return values;
  if (std::abs(have - frames) > 1 || frames <= 0 || have == 0)
    throw ValidationError("content features have " + std::to_string(have) +
                          " frames, acoustic grid has " + std::to_string(frames));
  if (have > frames) return values.narrow(0, 0, frames);
  return torch::cat({values, values.narrow(0, have - 1, 1)}, 0);
}

StubExtractor::StubExtractor(std::uint64_t seed, int feature_dim, int hop)
    : feature_dim_(feature_dim), hop_(hop) {
  if (feature_dim < 8) throw ValidationError("stub extractor needs feature_dim >= 8");
  if (hop != 320) throw ValidationError("stub extractor is built for a 320-sample hop");
  strides_ = {5, 4, 4, 4};
  const std::vector<int> kernels = {5, 8, 8, 8};
  const std::vector<int> channels = {1, 32, 64, 64, feature_dim};
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (size_t i = 0; i < strides_.size(); ++i) {
    const double fan_in = static_cast<double>(channels[i]) * kernels[i];
    weights_.push_back(torch::randn({channels[i + 1], channels[i], kernels[i]}, gen,
                                    torch::kFloat32) *
                       std::sqrt(2.0 / fan_in));
  }
}

ContentFeatures StubExtractor::extract(const Waveform& w) const {
  w.validate();
  const std::int64_t frames = static_cast<std::int64_t>(w.size()) / hop_;
  if (frames < 1) throw ValidationError("waveform shorter than one content frame");
  torch::NoGradGuard guard;
  auto x = torch::from_blob(const_cast<float*>(w.samples.data()),
                            {1, 1, static_cast<std::int64_t>(w.size())}, torch::kFloat32)
               .clone();
  for (size_t i = 0; i < weights_.size(); ++i) {
    const int pad = i == 0 ? 0 : strides_[i] / 2;
    x = torch::conv1d(x, weights_[i], {}, strides_[i], pad);
    if (i + 1 < weights_.size()) x = torch::leaky_relu(x, 0.2);
  }
  auto feats = x.squeeze(0).transpose(0, 1);  // [frames, dim]
  feats = align_frames(feats, frames);
  auto mean = feats.mean(0, true);
  auto std = feats.std(0, /*unbiased=*/false, true);
  ContentFeatures out;
  out.values = ((feats - mean) / (std + 1e-5)).contiguous();
  out.frame_hop = hop_;
  out.source = ContentFeatures::Source::kStub;
  return out;
}

ContentFeatures stub_extract(const Waveform& w, std::uint64_t seed, int feature_dim) {
  return StubExtractor(seed, feature_dim).extract(w);
}

ExternalExtractor::ExternalExtractor(std::string command, int feature_dim, int layer, int retries,
                                     int hop)
    : command_(std::move(command)),
      feature_dim_(feature_dim),
      layer_(layer),
      retries_(retries),
      hop_(hop) {
  if (command_.empty()) throw ConfigError("external extractor needs a command");
  if (retries_ < 0) throw ConfigError("external extractor retries must be >= 0");
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

ContentFeatures ExternalExtractor::extract(const Waveform& w) const {
  w.validate();
  const std::int64_t frames = static_cast<std::int64_t>(w.size()) / hop_;
  if (frames < 1) throw ValidationError("waveform shorter than one content frame");
  std::lock_guard<std::mutex> lock(mutex_);

  static std::atomic<unsigned> counter{0};
  const fs::path dir = fs::temp_directory_path();
  const std::string stem = "stylevc_ext_" + std::to_string(::getpid()) + "_" +
                           std::to_string(counter.fetch_add(1));
  const fs::path wav_path = dir / (stem + ".wav");
  const fs::path feat_path = dir / (stem + ".feat");
  write_wav(wav_path.string(), w);

  std::string last_error;
  const int attempts = retries_ + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    std::error_code ec;
    fs::remove(feat_path, ec);
    const std::string cmd = command_ + " --in " + shell_quote(wav_path.string()) + " --out " +
                            shell_quote(feat_path.string()) + " --layer " + std::to_string(layer_) +
                            " --dim " + std::to_string(feature_dim_);
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
      last_error = "command exited with status " + std::to_string(rc);
      continue;
    }
    try {
      auto records = read_feature_records(feat_path.string());
      if (records.size() != 1) throw IoError("expected one record, got " + std::to_string(records.size()));
      if (records[0].values.size(1) != feature_dim_)
        throw IoError("backend returned dim " + std::to_string(records[0].values.size(1)) +
                      ", expected " + std::to_string(feature_dim_));
      ContentFeatures out;
      out.values = align_frames(records[0].values, frames).contiguous();
      out.frame_hop = hop_;
      out.source = ContentFeatures::Source::kExternal;
      fs::remove(wav_path, ec);
      fs::remove(feat_path, ec);
      return out;
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  std::error_code ec;
  fs::remove(wav_path, ec);
  fs::remove(feat_path, ec);
  throw BackendError("external content backend failed after " + std::to_string(attempts) +
                         " attempt(s): " + last_error,
                     attempts);
}

std::unique_ptr<ContentExtractor> make_extractor(const ContentConfig& cfg, int hop) {
  if (cfg.backend == "stub") return std::make_unique<StubExtractor>(cfg.stub_seed, cfg.feature_dim, hop);
  if (cfg.backend == "external")
    return std::make_unique<ExternalExtractor>(cfg.external_command, cfg.feature_dim, cfg.layer,
                                               cfg.retries, hop);
  throw ConfigError("unknown content backend '" + cfg.backend + "'");
}

void write_feature_records(const std::string& path, std::span<const FeatureRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) {
    auto v = r.values.to(torch::kFloat32).contiguous();
    if (v.dim() != 2) throw ValidationError("feature record must be 2-D");
    put_u32(out, static_cast<std::uint32_t>(r.utt_id.size()));
    out.write(r.utt_id.data(), static_cast<std::streamsize>(r.utt_id.size()));
    put_u32(out, static_cast<std::uint32_t>(v.size(0)));
    put_u32(out, static_cast<std::uint32_t>(v.size(1)));
    // Values are written byte-by-byte in little-endian order.
    const float* p = v.data_ptr<float>();
    std::vector<char> buf(v.numel() * 4);
    for (std::int64_t i = 0; i < v.numel(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, p + i, 4);
      for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<char>(bits >> (8 * b));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("write failed for " + path);
}

std::vector<FeatureRecord> read_feature_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<FeatureRecord> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    std::uint32_t id_len, frames, dim;
    if (!get_u32(in, id_len)) throw IoError(path + ": truncated record header");
    if (id_len > (1u << 20)) throw IoError(path + ": implausible utt_id length");
    std::string id(id_len, '\0');
    if (!in.read(id.data(), id_len) || !get_u32(in, frames) || !get_u32(in, dim))
      throw IoError(path + ": truncated record header");
    const std::uint64_t count = static_cast<std::uint64_t>(frames) * dim;
    std::vector<unsigned char> buf(count * 4);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw IoError(path + ": truncated values for '" + id + "'");
    auto values = torch::empty({frames, dim}, torch::kFloat32);
    float* p = values.data_ptr<float>();
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t bits = buf[i * 4] | (buf[i * 4 + 1] << 8) | (buf[i * 4 + 2] << 16) |
                                 (static_cast<std::uint32_t>(buf[i * 4 + 3]) << 24);
      std::memcpy(p + i, &bits, 4);
    }
    records.push_back({std::move(id), values});
  }
  return records;
}

}  // namespace stylevc
