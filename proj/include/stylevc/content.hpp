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

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "stylevc/audio.hpp"
#include "stylevc/config.hpp"
#include "stylevc/features.hpp"

namespace stylevc {

// Content features at the acoustic frame rate. Implementations are immutable
// after construction and may be shared between threads.
class ContentExtractor {
 public:
  virtual ~ContentExtractor() = default;
  virtual ContentFeatures extract(const Waveform& w) const = 0;
  virtual int feature_dim() const = 0;
};

// Frozen random-projection conv stack (strides 5, 4, 4, 4 -> 320) with
// leaky-ReLU and no biases, followed by per-dimension normalisation over
// time. The stack is positively homogeneous, so input gain drops out.
class StubExtractor : public ContentExtractor {
 public:
  StubExtractor(std::uint64_t seed, int feature_dim, int hop = 320);
  ContentFeatures extract(const Waveform& w) const override;
  int feature_dim() const override { return feature_dim_; }

 private:
  int feature_dim_;
  int hop_;
  std::vector<torch::Tensor> weights_;
  std::vector<int> strides_;
};

// Out-of-process client. The command is invoked as
//   <command> --in <wav> --out <features> --layer <L> --dim <D>
// and must write a single feature record. Failed attempts are retried; the
// final failure surfaces as BackendError carrying the attempt count.
class ExternalExtractor : public ContentExtractor {
 public:
  ExternalExtractor(std::string command, int feature_dim, int layer, int retries, int hop = 320);
  ContentFeatures extract(const Waveform& w) const override;
  int feature_dim() const override { return feature_dim_; }

 private:
  std::string command_;
  int feature_dim_;
  int layer_;
  int retries_;
  int hop_;
  mutable std::mutex mutex_;
};

// Single-quotes a string for /bin/sh.
std::string shell_quote(const std::string& s);

std::unique_ptr<ContentExtractor> make_extractor(const ContentConfig& cfg, int hop);

ContentFeatures stub_extract(const Waveform& w, std::uint64_t seed, int feature_dim);

// Trims or edge-pads `values` ([frames x dim]) to `frames` rows. A mismatch
// larger than one frame is an error.
torch::Tensor align_frames(const torch::Tensor& values, std::int64_t frames);

// Feature cache: a file is a sequence of records
//   u32 id_len | id bytes | u32 frames | u32 dim | frames*dim float32
// all little-endian, values row-major.
struct FeatureRecord {
  std::string utt_id;
  torch::Tensor values;  // [frames x dim] float32
};

void write_feature_records(const std::string& path, std::span<const FeatureRecord> records);
std::vector<FeatureRecord> read_feature_records(const std::string& path);

}  // namespace stylevc
