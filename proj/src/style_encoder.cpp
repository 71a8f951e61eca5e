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

#include "stylevc/style_encoder.hpp"

#include "stylevc/errors.hpp"

namespace stylevc {

StyleEncoderImpl::StyleEncoderImpl(const StyleConfig& cfg, int n_mels)
    : style_dim_(cfg.style_dim), heads_(cfg.heads), attentive_(cfg.pooling == "attentive") {
  const int h = cfg.hidden;
  spectral1_ = register_module("spectral1", torch::nn::Conv1d(torch::nn::Conv1dOptions(n_mels, h, 1)));
  spectral2_ = register_module("spectral2", torch::nn::Conv1d(torch::nn::Conv1dOptions(h, h, 1)));
  if (attentive_) {
    attn_hidden_ = register_module("attn_hidden", torch::nn::Conv1d(torch::nn::Conv1dOptions(h, h / 2 + 1, 1)));
    attn_logits_ =
        register_module("attn_logits", torch::nn::Conv1d(torch::nn::Conv1dOptions(h / 2 + 1, heads_, 1)));
    head_ = register_module("head", torch::nn::Linear(2 * h * heads_, style_dim_));
  } else {
    head_ = register_module("head", torch::nn::Linear(h, style_dim_));
  }
  null_ = register_parameter("null_embedding", torch::zeros({style_dim_}));
}

torch::Tensor StyleEncoderImpl::forward(const torch::Tensor& mel, const torch::Tensor& mask) {
  auto x = torch::relu(spectral1_->forward(mel));
  x = torch::relu(spectral2_->forward(x)) * mask;  // [B, H, T]
  const auto count = mask.sum(-1).clamp_min(1.0);  // [B, 1]
  if (!attentive_) return head_->forward(x.sum(-1) / count);

  auto logits = attn_logits_->forward(torch::tanh(attn_hidden_->forward(x)));  // [B, heads, T]
  logits = logits.masked_fill(mask < 0.5, -1e4);
  auto w = torch::softmax(logits, -1).unsqueeze(2);  // [B, heads, 1, T]
  auto xe = x.unsqueeze(1);                            // [B, 1, H, T]
  auto mean = (w * xe).sum(-1);                        // [B, heads, H]
  auto var = (w * xe * xe).sum(-1) - mean * mean;
  auto std = torch::sqrt(var.clamp_min(1e-6));
  auto stats = torch::cat({mean, std}, -1).flatten(1);  // [B, heads * 2H]
  return head_->forward(stats);
}

StyleVector StyleEncoderImpl::encode(const MelSpectrogram& mel) {
  if (mel.values.dim() != 2) throw ValidationError("encode_style expects a [n_mels x frames] mel");
  if (mel.frames() < kMinFrames)
    throw ValidationError("encode_style needs at least " + std::to_string(kMinFrames) +
                          " frames, got " + std::to_string(mel.frames()));
  auto m = mel.values.unsqueeze(0).to(null_.dtype());
  auto mask = torch::ones({1, 1, m.size(2)}, m.options());
  return {forward(m, mask).squeeze(0), StyleVector::Origin::kEncoded};
}

}  // namespace stylevc
