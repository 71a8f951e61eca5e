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

namespace stylevc {

// [B, 1, T] float mask with ones on the first lengths[b] frames.
torch::Tensor sequence_mask(const torch::Tensor& lengths, std::int64_t max_len,
                            torch::ScalarType dtype = torch::kFloat32);

// Non-causal gated dilated-conv stack with global conditioning: the
// conditioning vector is linearly mapped and broadcast-added to every
// layer's gate input.
class WaveNetImpl : public torch::nn::Module {
 public:
  WaveNetImpl(int hidden, int kernel, int dilation_rate, int layers, int cond_dim);

  // x: [B, hidden, T], mask: [B, 1, T], cond: [B, cond_dim] (may be undefined
  // when cond_dim == 0). Returns the masked sum of skip outputs.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask,
                        const torch::Tensor& cond);

  int num_layers() const { return static_cast<int>(in_layers_.size()); }
  int hidden() const { return hidden_; }

 private:
  int hidden_;
  std::vector<torch::nn::Conv1d> in_layers_;
  std::vector<torch::nn::Conv1d> res_skip_layers_;
  torch::nn::Linear cond_{nullptr};
};
TORCH_MODULE(WaveNet);

// One residual block of a multi-receptive-field fusion stage.
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int channels, int kernel, const std::vector<int>& dilations);
  torch::Tensor forward(torch::Tensor x);

 private:
  std::vector<torch::nn::Conv1d> convs1_;
  std::vector<torch::nn::Conv1d> convs2_;
};
TORCH_MODULE(ResBlock);

// Multi-receptive-field fusion: mean of ResBlocks with different kernels.
class MrfImpl : public torch::nn::Module {
 public:
  MrfImpl(int channels, const std::vector<int>& kernels,
          const std::vector<std::vector<int>>& dilations);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  std::vector<ResBlock> blocks_;
};
TORCH_MODULE(Mrf);

// Transformer block with self-attention and a convolutional feed-forward
// net, post-norm.
class FftBlockImpl : public torch::nn::Module {
 public:
  FftBlockImpl(int hidden, int heads, int filter, int kernel);
  // x: [B, T, hidden], mask: [B, T] (1 = valid).
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

 private:
  int heads_;
  torch::nn::Linear qkv_{nullptr}, out_{nullptr};
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv1d ff1_{nullptr}, ff2_{nullptr};
};
TORCH_MODULE(FftBlock);

int same_padding(int kernel, int dilation);

}  // namespace stylevc
