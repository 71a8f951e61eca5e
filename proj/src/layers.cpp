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

#include "stylevc/layers.hpp"

#include <cmath>

namespace stylevc {

namespace F = torch::nn::functional;

int same_padding(int kernel, int dilation) { return (kernel * dilation - dilation) / 2; }

torch::Tensor sequence_mask(const torch::Tensor& lengths, std::int64_t max_len,
                            torch::ScalarType dtype) {
  auto range = torch::arange(max_len, lengths.options().dtype(torch::kLong));
  return (range.unsqueeze(0) < lengths.to(torch::kLong).unsqueeze(1)).unsqueeze(1).to(dtype);
}

WaveNetImpl::WaveNetImpl(int hidden, int kernel, int dilation_rate, int layers, int cond_dim)
    : hidden_(hidden) {
  int dilation = 1;
  for (int i = 0; i < layers; ++i) {
    in_layers_.push_back(register_module(
        "in_" + std::to_string(i),
        torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, 2 * hidden, kernel)
                              .dilation(dilation)
                              .padding(same_padding(kernel, dilation)))));
    const int out_ch = i + 1 < layers ? 2 * hidden : hidden;
    res_skip_layers_.push_back(register_module(
        "res_skip_" + std::to_string(i), torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, out_ch, 1))));
    dilation *= dilation_rate;
  }
  if (cond_dim > 0)
    cond_ = register_module("cond", torch::nn::Linear(cond_dim, 2 * hidden * layers));
}

torch::Tensor WaveNetImpl::forward(const torch::Tensor& x_in, const torch::Tensor& mask,
                                   const torch::Tensor& cond) {
  auto x = x_in;
  auto output = torch::zeros_like(x);
  torch::Tensor g;
  if (cond_ && cond.defined()) g = cond_->forward(cond).unsqueeze(-1);  // [B, 2HL, 1]
  const int layers = num_layers();
  for (int i = 0; i < layers; ++i) {
    auto h = in_layers_[i]->forward(x);
    if (g.defined()) h = h + g.narrow(1, 2 * hidden_ * i, 2 * hidden_);
    auto acts = torch::tanh(h.narrow(1, 0, hidden_)) * torch::sigmoid(h.narrow(1, hidden_, hidden_));
    auto rs = res_skip_layers_[i]->forward(acts);
    if (i + 1 < layers) {
      x = (x + rs.narrow(1, 0, hidden_)) * mask;
      output = output + rs.narrow(1, hidden_, hidden_);
    } else {
      output = output + rs;
    }
  }
  return output * mask;
}

ResBlockImpl::ResBlockImpl(int channels, int kernel, const std::vector<int>& dilations) {
  for (size_t i = 0; i < dilations.size(); ++i) {
    convs1_.push_back(register_module(
        "c1_" + std::to_string(i),
        torch::nn::Conv1d(torch::nn::Conv1dOptions(channels, channels, kernel)
                              .dilation(dilations[i])
                              .padding(same_padding(kernel, dilations[i])))));
    convs2_.push_back(register_module(
        "c2_" + std::to_string(i),
        torch::nn::Conv1d(
            torch::nn::Conv1dOptions(channels, channels, kernel).padding(same_padding(kernel, 1)))));
  }
}

torch::Tensor ResBlockImpl::forward(torch::Tensor x) {
  for (size_t i = 0; i < convs1_.size(); ++i) {
    auto xt = convs1_[i]->forward(torch::leaky_relu(x, 0.1));
    xt = convs2_[i]->forward(torch::leaky_relu(xt, 0.1));
    x = x + xt;
  }
  return x;
}

MrfImpl::MrfImpl(int channels, const std::vector<int>& kernels,
                 const std::vector<std::vector<int>>& dilations) {
  for (size_t i = 0; i < kernels.size(); ++i)
    blocks_.push_back(
        register_module("block_" + std::to_string(i), ResBlock(channels, kernels[i], dilations[i])));
}

torch::Tensor MrfImpl::forward(const torch::Tensor& x) {
  torch::Tensor acc;
  for (auto& b : blocks_) {
    auto y = b->forward(x);
    acc = acc.defined() ? acc + y : y;
  }
  return acc / static_cast<double>(blocks_.size());
}

FftBlockImpl::FftBlockImpl(int hidden, int heads, int filter, int kernel) : heads_(heads) {
  qkv_ = register_module("qkv", torch::nn::Linear(hidden, 3 * hidden));
  out_ = register_module("out", torch::nn::Linear(hidden, hidden));
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({hidden})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({hidden})));
  ff1_ = register_module(
      "ff1", torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, filter, kernel).padding(kernel / 2)));
  ff2_ = register_module(
      "ff2", torch::nn::Conv1d(torch::nn::Conv1dOptions(filter, hidden, kernel).padding(kernel / 2)));
}

torch::Tensor FftBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto B = x.size(0), T = x.size(1), H = x.size(2);
  const auto head_dim = H / heads_;
  auto qkv = qkv_->forward(x).view({B, T, 3, heads_, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0], k = qkv[1], v = qkv[2];  // [B, heads, T, hd]
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  auto key_mask = mask.view({B, 1, 1, T}) > 0.5;
  scores = scores.masked_fill(~key_mask, -1e4);
  auto attn = torch::softmax(scores, -1);
  auto ctx = torch::matmul(attn, v).permute({0, 2, 1, 3}).reshape({B, T, H});
  auto m = mask.unsqueeze(-1);
  auto y = norm1_->forward(x + out_->forward(ctx)) * m;
  auto ff = ff2_->forward(torch::relu(ff1_->forward(y.transpose(1, 2)))).transpose(1, 2);
  return norm2_->forward(y + ff) * m;
}

}  // namespace stylevc
