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

#include <torch/torch.h>

#include "stylevc/audio.hpp"
#include "stylevc/config.hpp"
#include "stylevc/features.hpp"

namespace stylevc {

// Deterministic feature extraction. Frames follow the reflect-padded grid
// where a waveform of T samples yields floor(T / hop) frames; frame k is
// centred on sample k * hop + hop / 2.
class Frontend {
 public:
  explicit Frontend(FrontendConfig cfg);

  const FrontendConfig& config() const { return cfg_; }

  Spectrogram linear_spectrogram(const Waveform& w) const;
  MelSpectrogram mel_spectrogram(const Waveform& w) const;
  PitchTrack extract_f0(const Waveform& w) const;

  // Differentiable batch versions used by the losses. audio is [B, T]
  // (any floating dtype); results are [B, bins, frames] / [B, n_mels, frames].
  torch::Tensor magnitude(const torch::Tensor& audio) const;
  torch::Tensor log_mel(const torch::Tensor& audio) const;
  torch::Tensor mel_from_magnitude(const torch::Tensor& magnitude) const;

  // Slaney-normalised triangular filters, [n_mels x bins], float32.
  const torch::Tensor& mel_filterbank() const { return mel_basis_; }

  std::int64_t frames_for(std::int64_t samples) const { return samples / cfg_.hop; }

 private:
  void check_input(const Waveform& w, std::int64_t min_len, const char* what) const;

  FrontendConfig cfg_;
  torch::Tensor window_;
  torch::Tensor mel_basis_;
};

// Builds the filterbank independently of any Frontend instance.
torch::Tensor slaney_mel_filterbank(int sample_rate, int n_fft, int n_mels, double fmin,
                                    double fmax);

// Cuts n_frames acoustic frames starting at start_frame out of every stream.
FeatureBundle slice_aligned(const FeatureBundle& bundle, std::int64_t start_frame,
                            std::int64_t n_frames, int hop, int f0_per_frame);

// Throws ValidationError when the streams of a bundle disagree on length.
void check_alignment(const FeatureBundle& bundle, int hop, int f0_per_frame);

}  // namespace stylevc
