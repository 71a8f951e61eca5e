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

#include "stylevc/discriminators.hpp"

#include "stylevc/errors.hpp"

namespace stylevc {

DiscriminatorOutput merge(DiscriminatorOutput a, const DiscriminatorOutput& b) {
  a.scores.insert(a.scores.end(), b.scores.begin(), b.scores.end());
  a.features.insert(a.features.end(), b.features.begin(), b.features.end());
  return a;
}

PeriodDiscriminatorImpl::PeriodDiscriminatorImpl(int period, const std::vector<int>& channels)
    : period_(period) {
  int in = 1;
  for (size_t i = 0; i < channels.size(); ++i) {
    const int stride = i + 1 < channels.size() ? 3 : 1;
    convs_.push_back(register_module(
        "conv_" + std::to_string(i),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, channels[i], {5, 1})
                              .stride({stride, 1})
                              .padding({2, 0}))));
    in = channels[i];
  }
  post_ = register_module("post",
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, {3, 1}).padding({1, 0})));
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> PeriodDiscriminatorImpl::forward(
    const torch::Tensor& audio) {
  const auto B = audio.size(0), T = audio.size(1);
  const auto pad = (period_ - T % period_) % period_;
  auto x = pad > 0 ? torch::constant_pad_nd(audio, {0, pad}) : audio;
  x = x.view({B, 1, (T + pad) / period_, period_});
  std::vector<torch::Tensor> feats;
  for (auto& c : convs_) {
    x = torch::leaky_relu(c->forward(x), 0.1);
    feats.push_back(x);
  }
  x = post_->forward(x);
  feats.push_back(x);
  return {x.flatten(1), feats};
}

MultiPeriodDiscriminatorImpl::MultiPeriodDiscriminatorImpl(const std::vector<int>& periods,
                                                           const std::vector<int>& channels) {
  for (int p : periods)
    subs_.push_back(register_module("period_" + std::to_string(p), PeriodDiscriminator(p, channels)));
}

DiscriminatorOutput MultiPeriodDiscriminatorImpl::forward(const torch::Tensor& audio) {
  if (audio.dim() != 2 || audio.size(1) < 1)
    throw ValidationError("multi-period discriminator expects non-empty [B, T] audio");
  DiscriminatorOutput out;
  for (auto& d : subs_) {
    auto [score, feats] = d->forward(audio);
    out.scores.push_back(score);
    out.features.push_back(std::move(feats));
  }
  return out;
}

StftDiscriminatorImpl::StftDiscriminatorImpl(int window, int filters) : window_(window) {
  hann_ = register_buffer("hann", torch::hann_window(window));
  convs_.push_back(register_module(
      "conv_0", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, filters, {3, 9}).padding({1, 4}))));
  const int dilations[] = {1, 2, 4};
  for (int i = 0; i < 3; ++i) {
    const int d = dilations[i];
    convs_.push_back(register_module(
        "conv_" + std::to_string(i + 1),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(filters, filters, {3, 9})
                              .stride({1, 2})
                              .dilation({d, 1})
                              .padding({d, 4}))));
  }
  convs_.push_back(register_module(
      "conv_4", torch::nn::Conv2d(torch::nn::Conv2dOptions(filters, filters, {3, 3}).padding({1, 1}))));
  post_ = register_module(
      "post", torch::nn::Conv2d(torch::nn::Conv2dOptions(filters, 1, {3, 3}).padding({1, 1})));
}

torch::Tensor StftDiscriminatorImpl::complex_planes(const torch::Tensor& audio) const {
  auto spec = torch::stft(audio, window_, window_ / 4, window_, hann_.to(audio.dtype()),
                          /*center=*/false, "reflect", /*normalized=*/true, /*onesided=*/true,
                          /*return_complex=*/true);  // [B, bins, frames]
  return torch::stack({torch::real(spec), torch::imag(spec)}, 1).transpose(2, 3);
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> StftDiscriminatorImpl::forward(
    const torch::Tensor& audio) {
  auto x = complex_planes(audio);
  std::vector<torch::Tensor> feats;
  for (auto& c : convs_) {
    x = torch::leaky_relu(c->forward(x), 0.2);
    feats.push_back(x);
  }
  x = post_->forward(x);
  feats.push_back(x);
  return {x.flatten(1), feats};
}

MultiScaleStftDiscriminatorImpl::MultiScaleStftDiscriminatorImpl(const std::vector<int>& windows,
                                                                 int filters) {
  for (int w : windows) {
    subs_.push_back(register_module("window_" + std::to_string(w), StftDiscriminator(w, filters)));
    max_window_ = std::max(max_window_, w);
  }
}

DiscriminatorOutput MultiScaleStftDiscriminatorImpl::forward(const torch::Tensor& audio) {
  if (audio.dim() != 2 || audio.size(1) < max_window_)
    throw ValidationError("multi-scale STFT discriminator needs [B, T] audio with T >= " +
                          std::to_string(max_window_));
  DiscriminatorOutput out;
  for (auto& d : subs_) {
    auto [score, feats] = d->forward(audio);
    out.scores.push_back(score);
    out.features.push_back(std::move(feats));
  }
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscConfig& cfg) {
  mpd_ = register_module("mpd", MultiPeriodDiscriminator(cfg.periods, cfg.period_channels));
  msstftd_ = register_module("msstftd", MultiScaleStftDiscriminator(cfg.stft_windows, cfg.stft_filters));
}

DiscriminatorOutput DiscriminatorImpl::mpd_forward(const torch::Tensor& audio) {
  return mpd_->forward(audio);
}

DiscriminatorOutput DiscriminatorImpl::msstftd_forward(const torch::Tensor& audio) {
  return msstftd_->forward(audio);
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& audio) {
  return merge(mpd_->forward(audio), msstftd_->forward(audio));
}

namespace {

void check_structure(const DiscriminatorOutput& a, const DiscriminatorOutput& b, bool features) {
  if (a.scores.size() != b.scores.size() || a.scores.empty())
    throw ValidationError("discriminator outputs have different numbers of score maps");
  for (size_t i = 0; i < a.scores.size(); ++i)
    if (a.scores[i].sizes() != b.scores[i].sizes())
      throw ValidationError("score map " + std::to_string(i) + " shapes differ");
  if (!features) return;
  if (a.features.size() != b.features.size())
    throw ValidationError("discriminator outputs have different feature structures");
  for (size_t i = 0; i < a.features.size(); ++i) {
    if (a.features[i].size() != b.features[i].size())
      throw ValidationError("sub-discriminator " + std::to_string(i) + " layer counts differ");
    for (size_t l = 0; l < a.features[i].size(); ++l)
      if (a.features[i][l].sizes() != b.features[i][l].sizes())
        throw ValidationError("feature map shapes differ");
  }
}

}  // namespace

torch::Tensor disc_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake) {
  check_structure(real, fake, false);
  torch::Tensor total;
  for (size_t i = 0; i < real.scores.size(); ++i) {
    auto term = torch::pow(real.scores[i] - 1.0, 2).mean() + torch::pow(fake.scores[i], 2).mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(real.scores.size());
}

torch::Tensor gen_adv_loss(const DiscriminatorOutput& fake) {
  if (fake.scores.empty()) throw ValidationError("gen_adv_loss: no score maps");
  torch::Tensor total;
  for (const auto& s : fake.scores) {
    auto term = torch::pow(s - 1.0, 2).mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(fake.scores.size());
}

torch::Tensor feature_matching_loss(const DiscriminatorOutput& real, const DiscriminatorOutput& fake) {
  check_structure(real, fake, true);
  torch::Tensor total;
  std::int64_t count = 0;
  for (size_t i = 0; i < real.features.size(); ++i) {
    for (size_t l = 0; l < real.features[i].size(); ++l) {
      auto term = torch::abs(real.features[i][l].detach() - fake.features[i][l]).mean();
      total = total.defined() ? total + term : term;
      ++count;
    }
  }
  if (count == 0) throw ValidationError("feature_matching_loss: no feature maps");
  return total / static_cast<double>(count);
}

}  // namespace stylevc
