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
#include <vector>

namespace stylevc {

// Mono audio at a declared rate. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  // Throws ValidationError unless non-empty, finite and sample_rate > 0.
  void validate() const;
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  bool is_float = false;
  std::uint64_t frames = 0;
  double duration() const { return sample_rate ? static_cast<double>(frames) / sample_rate : 0.0; }
};

// Reads only the header chunks.
WavInfo probe_wav(const std::string& path);

// Decodes 8/16/24/32-bit PCM and 32/64-bit float WAV; channels are averaged.
// The result may be empty; callers that need audio should validate().
Waveform read_wav(const std::string& path);

// Writes 16-bit PCM, clipping to [-1, 1].
void write_wav(const std::string& path, const Waveform& w);

// Band-limited rational resampling (Kaiser-windowed sinc, polyphase). Equal
// rates return the input unchanged.
Waveform resample(const Waveform& w, int target_rate);

Waveform load_and_resample(const std::string& path, int target_rate);

}  // namespace stylevc
