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

namespace stylevc {

// One score map and one feature list per sub-discriminator.
struct DiscriminatorOutput {
  std::vector<torch::Tensor> scores;
  std::vector<std::vector<torch::Tensor>> features;
};

DiscriminatorOutput merge(DiscriminatorOutput a, const DiscriminatorOutput& b);

// 2-D conv stack over audio folded to [T / period, period]; audio is zero
// padded on the right to a multiple of the period.
class PeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  PeriodDiscriminatorImpl(int period, const std::vector<int>& channels);
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward(const torch::Tensor& audio);
  int period() const { return period_; }

 private:
  int period_;
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Conv2d post_{nullptr};
};
TORCH_MODULE(PeriodDiscriminator);

class MultiPeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  MultiPeriodDiscriminatorImpl(const std::vector<int>& periods, const std::vector<int>& channels);
  DiscriminatorOutput forward(const torch::Tensor& audio);  // audio [B, T]

 private:
  std::vector<PeriodDiscriminator> subs_;
};
TORCH_MODULE(MultiPeriodDiscriminator);

// Conv stack over the stacked real and imaginary planes of a complex STFT
// (hop = window / 4, no mel projection).
class StftDiscriminatorImpl : public torch::nn::Module {
 public:
  StftDiscriminatorImpl(int window, int filters);
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward(const torch::Tensor& audio);
  // [B, 2, frames, bins] input planes; exposed for inspection.
  torch::Tensor complex_planes(const torch::Tensor& audio) const;
  int window() const { return window_; }

 private:
  int window_;
  torch::Tensor hann_;
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Conv2d post_{nullptr};
};
TORCH_MODULE(StftDiscriminator);

class MultiScaleStftDiscriminatorImpl : public torch::nn::Module {
 public:
  MultiScaleStftDiscriminatorImpl(const std::vector<int>& windows, int filters);
  DiscriminatorOutput forward(const torch::Tensor& audio);
  const std::vector<StftDiscriminator>& subs() const { return subs_; }
  int max_window() const { return max_window_; }

 private:
  std::vector<StftDiscriminator> subs_;
  int max_window_ = 0;
};
TORCH_MODULE(MultiScaleStftDiscriminator);

// MPD and MS-STFTD; the merged output lists MPD maps first.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscConfig& cfg);
  DiscriminatorOutput forward(const torch::Tensor& audio);
  DiscriminatorOutput mpd_forward(const torch::Tensor& audio);
  DiscriminatorOutput msstftd_forward(const torch::Tensor& audio);

 private:
  MultiPeriodDiscriminator mpd_{nullptr};
  MultiScaleStftDiscriminator msstftd_{nullptr};
};
TORCH_MODULE(Discriminator);

// LSGAN discriminator objective, averaged over score maps:
//   mean_m [ mean((D_m(x) - 1)^2) + mean(D_m(G)^2) ]
torch::Tensor disc_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake);
// mean_m mean((D_m(G) - 1)^2)
torch::Tensor gen_adv_loss(const DiscriminatorOutput& fake);
// Mean over (sub-discriminator, layer) of mean |real - fake|; real features
// are detached.
torch::Tensor feature_matching_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake);

}  // namespace stylevc
