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

#include <torch/torch.h>

#include "stylevc/config.hpp"
#include "stylevc/features.hpp"

namespace stylevc {

struct StyleVector {
  enum class Origin { kEncoded, kNull };
  torch::Tensor values;  // [style_dim] or [B, style_dim]
  Origin origin = Origin::kEncoded;
};

// Global style from a mel-spectrogram: two frame-wise (1x1) conv layers,
// multi-head attentive statistics pooling (or plain mean pooling) and a
// linear head. Also owns the learned null embedding used when the generator
// runs unconditionally.
class StyleEncoderImpl : public torch::nn::Module {
 public:
  StyleEncoderImpl(const StyleConfig& cfg, int n_mels);

  // mel: [B, n_mels, T], mask: [B, 1, T]. Returns [B, style_dim].
  torch::Tensor forward(const torch::Tensor& mel, const torch::Tensor& mask);

  // Single unbatched utterance; requires at least kMinFrames frames.
  StyleVector encode(const MelSpectrogram& mel);

  StyleVector null_embedding() const { return {null_, StyleVector::Origin::kNull}; }
  const torch::Tensor& null_parameter() const { return null_; }

  int style_dim() const { return style_dim_; }

  static constexpr int kMinFrames = 8;

 private:
  int style_dim_;
  int heads_;
  bool attentive_;
  torch::nn::Conv1d spectral1_{nullptr}, spectral2_{nullptr};
  torch::nn::Conv1d attn_hidden_{nullptr}, attn_logits_{nullptr};
  torch::nn::Linear head_{nullptr};
  torch::Tensor null_;
};
TORCH_MODULE(StyleEncoder);

}  // namespace stylevc
