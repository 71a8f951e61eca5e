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
#include <string>

#include <torch/torch.h>

namespace stylevc {

// Magnitude spectrogram, [bins x frames].
struct Spectrogram {
  torch::Tensor values;
  int hop = 320;
  int window = 1280;
  std::int64_t bins() const { return values.size(0); }
  std::int64_t frames() const { return values.size(1); }
};

// Log-compressed mel spectrogram, [n_mels x frames].
struct MelSpectrogram {
  torch::Tensor values;
  std::int64_t n_mels() const { return values.size(0); }
  std::int64_t frames() const { return values.size(1); }
};

// Log-F0 on the fine pitch grid. log_f0 is exactly 0 where voiced is false.
struct PitchTrack {
  torch::Tensor log_f0;  // float [n]
  torch::Tensor voiced;  // bool [n]
  std::int64_t frames() const { return log_f0.size(0); }
};

// Self-supervised (or stand-in) content features, [frames x feature_dim].
struct ContentFeatures {
  enum class Source { kExternal, kStub };
  torch::Tensor values;
  int frame_hop = 320;
  Source source = Source::kStub;
  std::int64_t frames() const { return values.size(0); }
  std::int64_t dim() const { return values.size(1); }
};

// Per-utterance aligned streams. With A acoustic frames the audio holds
// A * hop samples, the spectrograms and both content streams hold A frames
// and the pitch track holds A * (hop / f0_hop) frames.
struct FeatureBundle {
  std::string utt_id;
  torch::Tensor audio;  // float [A * hop]
  Spectrogram spec;
  MelSpectrogram mel;
  ContentFeatures content;       // features of the original audio
  ContentFeatures content_pert;  // features of the perturbed audio (the condition)
  PitchTrack pitch;

  std::int64_t frames() const { return spec.frames(); }
};

}  // namespace stylevc
