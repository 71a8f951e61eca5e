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

#include <vector>

#include <torch/torch.h>

#include "stylevc/config.hpp"
#include "stylevc/features.hpp"
#include "stylevc/frontend.hpp"
#include "stylevc/layers.hpp"
#include "stylevc/rng.hpp"

namespace stylevc {

struct PitchRepresentation {
  torch::Tensor p_h;      // [B, C, T * f0_per_frame]
  torch::Tensor f0_pred;  // [B, T * f0_per_frame] predicted log-F0
};

struct GeneratorOutput {
  torch::Tensor waveform;  // [B, T * hop], in (-1, 1)
  PitchRepresentation pitch;
  std::vector<bool> used_null_style;  // per batch item
};

struct UncondConfig {
  double p_uncond = 0.1;
};

// Per-item null-style decision; always false outside training mode.
bool draw_unconditional(const UncondConfig& cfg, Rng& rng, bool training_mode);

// G_s: z_a at the acoustic rate -> pitch representation on the F0 grid,
// through transposed-conv upsampling and MRF blocks, plus an auxiliary
// two-layer F0 head.
class SourceGeneratorImpl : public torch::nn::Module {
 public:
  SourceGeneratorImpl(const HagConfig& cfg, int latent, int style_dim);
  PitchRepresentation forward(const torch::Tensor& z_a, const torch::Tensor& s);
  int out_channels() const { return out_channels_; }
  int total_rate() const { return total_rate_; }

 private:
  int out_channels_;
  int total_rate_ = 1;
  torch::nn::Conv1d pre_{nullptr};
  torch::nn::Linear pre_cond_{nullptr};
  std::vector<torch::nn::ConvTranspose1d> ups_;
  std::vector<torch::nn::Linear> conds_;
  std::vector<Mrf> mrfs_;
  torch::nn::Conv1d f0_hidden_{nullptr}, f0_out_{nullptr};
};
TORCH_MODULE(SourceGenerator);

// G_w: HiFi-GAN style upsampler; p_h joins through a 1x1 conditioning conv
// right after the stage that reaches the F0 frame rate.
class WaveformGeneratorImpl : public torch::nn::Module {
 public:
  WaveformGeneratorImpl(const HagConfig& cfg, int latent, int style_dim, int pitch_channels,
                        int f0_per_frame);
  torch::Tensor forward(const torch::Tensor& z_a, const torch::Tensor& p_h, const torch::Tensor& s);
  int total_rate() const { return total_rate_; }
  int inject_stage() const { return inject_stage_; }

 private:
  int total_rate_ = 1;
  int inject_stage_ = -1;
  torch::nn::Conv1d pre_{nullptr}, post_{nullptr}, pitch_cond_{nullptr};
  std::vector<torch::nn::ConvTranspose1d> ups_;
  std::vector<torch::nn::Linear> conds_;
  std::vector<Mrf> mrfs_;
};
TORCH_MODULE(WaveformGenerator);

class HagImpl : public torch::nn::Module {
 public:
  HagImpl(const HagConfig& cfg, const FrontendConfig& fcfg, int latent, int style_dim);

  PitchRepresentation source_generate(const torch::Tensor& z_a, const torch::Tensor& s);
  torch::Tensor waveform_generate(const torch::Tensor& z_a, const PitchRepresentation& pitch,
                                  const torch::Tensor& s);

  // In training mode each batch item's style is replaced by `null_style`
  // with probability cfg.p_uncond; in inference mode never.
  GeneratorOutput generate(const torch::Tensor& z_a, const torch::Tensor& s,
                           const torch::Tensor& null_style, const UncondConfig& cfg, Rng& rng,
                           bool training_mode);

  SourceGenerator source() const { return source_; }
  WaveformGenerator waveform() const { return waveform_; }
  int hop() const { return hop_; }
  int f0_per_frame() const { return f0_per_frame_; }

 private:
  int hop_;
  int f0_per_frame_;
  int latent_;
  SourceGenerator source_{nullptr};
  WaveformGenerator waveform_{nullptr};
};
TORCH_MODULE(Hag);

// Mean absolute error over all frames (unvoiced targets are 0). Optional
// mask [B, N] restricts the mean to valid frames.
torch::Tensor pitch_loss(const torch::Tensor& f0_pred, const torch::Tensor& target,
                         const torch::Tensor& mask = {});
torch::Tensor pitch_loss(const torch::Tensor& f0_pred, const PitchTrack& target);

// Mean-L1 between log-mels of the reference and generated audio ([B, T]).
torch::Tensor stft_recon_loss(const Frontend& frontend, const torch::Tensor& x,
                              const torch::Tensor& x_hat);

}  // namespace stylevc
