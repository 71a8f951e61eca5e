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

#include "stylevc/hag.hpp"

#include "stylevc/errors.hpp"

namespace stylevc {
namespace {

torch::nn::ConvTranspose1d make_upsample(int in_ch, int out_ch, int kernel, int rate) {
  // Output length is exactly rate * input length.
  return torch::nn::ConvTranspose1d(torch::nn::ConvTranspose1dOptions(in_ch, out_ch, kernel)
                                        .stride(rate)
                                        .padding((kernel - rate + 1) / 2)
                                        .output_padding((kernel - rate) % 2));
}

torch::Tensor bias_from_style(torch::nn::Linear& proj, const torch::Tensor& s) {
  return proj->forward(s).unsqueeze(-1);
}

}  // namespace

SourceGeneratorImpl::SourceGeneratorImpl(const HagConfig& cfg, int latent, int style_dim) {
  int ch = cfg.source_channels;
  pre_ = register_module("pre", torch::nn::Conv1d(torch::nn::Conv1dOptions(latent, ch, 7).padding(3)));
  pre_cond_ = register_module("pre_cond", torch::nn::Linear(style_dim, ch));
  for (size_t i = 0; i < cfg.source_rates.size(); ++i) {
    const std::string idx = std::to_string(i);
    conds_.push_back(register_module("cond_" + idx, torch::nn::Linear(style_dim, ch)));
    ups_.push_back(register_module(
        "up_" + idx, make_upsample(ch, ch / 2, cfg.source_kernels[i], cfg.source_rates[i])));
    ch /= 2;
    mrfs_.push_back(register_module("mrf_" + idx, Mrf(ch, cfg.resblock_kernels, cfg.resblock_dilations)));
    total_rate_ *= cfg.source_rates[i];
  }
  out_channels_ = ch;
  f0_hidden_ =
      register_module("f0_hidden", torch::nn::Conv1d(torch::nn::Conv1dOptions(ch, ch, 3).padding(1)));
  f0_out_ = register_module("f0_out", torch::nn::Conv1d(torch::nn::Conv1dOptions(ch, 1, 3).padding(1)));
}

PitchRepresentation SourceGeneratorImpl::forward(const torch::Tensor& z_a, const torch::Tensor& s) {
  auto x = pre_->forward(z_a) + bias_from_style(pre_cond_, s);
  for (size_t i = 0; i < ups_.size(); ++i) {
    x = x + bias_from_style(conds_[i], s);
    x = ups_[i]->forward(torch::leaky_relu(x, 0.1));
    x = mrfs_[i]->forward(x);
  }
  PitchRepresentation out;
  out.p_h = x;
  auto h = f0_hidden_->forward(torch::leaky_relu(x, 0.1));
  out.f0_pred = f0_out_->forward(torch::leaky_relu(h, 0.1)).squeeze(1);
  return out;
}

WaveformGeneratorImpl::WaveformGeneratorImpl(const HagConfig& cfg, int latent, int style_dim,
                                             int pitch_channels, int f0_per_frame) {
  int ch = cfg.initial_channel;
  pre_ = register_module("pre", torch::nn::Conv1d(torch::nn::Conv1dOptions(latent, ch, 7).padding(3)));
  for (size_t i = 0; i < cfg.upsample_rates.size(); ++i) {
    const std::string idx = std::to_string(i);
    conds_.push_back(register_module("cond_" + idx, torch::nn::Linear(style_dim, ch)));
    ups_.push_back(register_module(
        "up_" + idx, make_upsample(ch, ch / 2, cfg.upsample_kernels[i], cfg.upsample_rates[i])));
    ch /= 2;
    mrfs_.push_back(register_module("mrf_" + idx, Mrf(ch, cfg.resblock_kernels, cfg.resblock_dilations)));
    total_rate_ *= cfg.upsample_rates[i];
    if (inject_stage_ < 0 && total_rate_ == f0_per_frame) {
      inject_stage_ = static_cast<int>(i);
      pitch_cond_ = register_module(
          "pitch_cond", torch::nn::Conv1d(torch::nn::Conv1dOptions(pitch_channels, ch, 1)));
    }
  }
  if (inject_stage_ < 0) throw ConfigError("waveform generator never reaches the F0 frame rate");
  post_ = register_module("post", torch::nn::Conv1d(torch::nn::Conv1dOptions(ch, 1, 7).padding(3)));
}

torch::Tensor WaveformGeneratorImpl::forward(const torch::Tensor& z_a, const torch::Tensor& p_h,
                                             const torch::Tensor& s) {
  auto x = pre_->forward(z_a);
  for (size_t i = 0; i < ups_.size(); ++i) {
    x = x + bias_from_style(conds_[i], s);
    x = ups_[i]->forward(torch::leaky_relu(x, 0.1));
    if (static_cast<int>(i) == inject_stage_) {
      if (p_h.size(2) != x.size(2))
        throw ValidationError("pitch representation has " + std::to_string(p_h.size(2)) +
                              " steps, generator stage has " + std::to_string(x.size(2)));
      x = x + pitch_cond_->forward(p_h);
    }
    x = mrfs_[i]->forward(x);
  }
  return torch::tanh(post_->forward(torch::leaky_relu(x, 0.01))).squeeze(1);
}

HagImpl::HagImpl(const HagConfig& cfg, const FrontendConfig& fcfg, int latent, int style_dim)
    : hop_(fcfg.hop), f0_per_frame_(fcfg.f0_per_frame()), latent_(latent) {
  source_ = register_module("source", SourceGenerator(cfg, latent, style_dim));
  waveform_ = register_module("waveform", WaveformGenerator(cfg, latent, style_dim,
                                                            source_->out_channels(), f0_per_frame_));
  if (source_->total_rate() != f0_per_frame_)
    throw ConfigError("source generator rate " + std::to_string(source_->total_rate()) +
                      " != hop / f0_hop = " + std::to_string(f0_per_frame_));
  if (waveform_->total_rate() != hop_)
    throw ConfigError("waveform generator rate " + std::to_string(waveform_->total_rate()) +
                      " != hop = " + std::to_string(hop_));
}

PitchRepresentation HagImpl::source_generate(const torch::Tensor& z_a, const torch::Tensor& s) {
  if (z_a.dim() != 3 || z_a.size(1) != latent_ || z_a.size(2) == 0)
    throw ValidationError("source_generate expects z_a of shape [B, " + std::to_string(latent_) +
                          ", T>0]");
  if (s.dim() != 2 || s.size(0) != z_a.size(0))
    throw ValidationError("source_generate: style batch does not match z_a");
  return source_->forward(z_a, s);
}

torch::Tensor HagImpl::waveform_generate(const torch::Tensor& z_a, const PitchRepresentation& pitch,
                                         const torch::Tensor& s) {
  if (z_a.dim() != 3 || z_a.size(1) != latent_)
    throw ValidationError("waveform_generate expects z_a of shape [B, latent, T]");
  if (!pitch.p_h.defined() || pitch.p_h.size(2) != z_a.size(2) * f0_per_frame_ ||
      pitch.p_h.size(0) != z_a.size(0))
    throw ValidationError("waveform_generate: p_h is not aligned with z_a");
  return waveform_->forward(z_a, pitch.p_h, s);
}

bool draw_unconditional(const UncondConfig& cfg, Rng& rng, bool training_mode) {
  if (cfg.p_uncond < 0.0 || cfg.p_uncond > 1.0) throw ValidationError("p_uncond must lie in [0, 1]");
  if (!training_mode || cfg.p_uncond == 0.0) return false;
  return rng.bernoulli(cfg.p_uncond);
}

GeneratorOutput HagImpl::generate(const torch::Tensor& z_a, const torch::Tensor& s,
                                  const torch::Tensor& null_style, const UncondConfig& cfg, Rng& rng,
                                  bool training_mode) {
  const auto batch = z_a.size(0);
  if (cfg.p_uncond < 0.0 || cfg.p_uncond > 1.0) throw ValidationError("p_uncond must lie in [0, 1]");
  GeneratorOutput out;
  out.used_null_style.assign(batch, false);
  auto style = s;
  if (training_mode && cfg.p_uncond > 0.0) {
    std::vector<float> flags(batch, 0.0f);
    bool any = false;
    for (std::int64_t b = 0; b < batch; ++b) {
      out.used_null_style[b] = draw_unconditional(cfg, rng, true);
      flags[b] = out.used_null_style[b] ? 1.0f : 0.0f;
      any = any || out.used_null_style[b];
    }
    if (any) {
      auto sel = torch::tensor(flags).to(s.dtype()).unsqueeze(1);
      style = sel * null_style.unsqueeze(0) + (1.0 - sel) * s;
    }
  }
  out.pitch = source_generate(z_a, style);
  out.waveform = waveform_generate(z_a, out.pitch, style);
  return out;
}

torch::Tensor pitch_loss(const torch::Tensor& f0_pred, const torch::Tensor& target,
                         const torch::Tensor& mask) {
  if (f0_pred.sizes() != target.sizes())
    throw ValidationError("pitch_loss: prediction has " + std::to_string(f0_pred.numel()) +
                          " frames, target " + std::to_string(target.numel()));
  auto diff = torch::abs(f0_pred - target.to(f0_pred.dtype()));
  if (!mask.defined()) return diff.mean();
  auto m = mask.to(diff.dtype());
  return (diff * m).sum() / m.sum().clamp_min(1.0);
}

torch::Tensor pitch_loss(const torch::Tensor& f0_pred, const PitchTrack& target) {
  return pitch_loss(f0_pred.reshape({-1}), target.log_f0.reshape({-1}));
}

torch::Tensor stft_recon_loss(const Frontend& frontend, const torch::Tensor& x,
                              const torch::Tensor& x_hat) {
  if (x.sizes() != x_hat.sizes())
    throw ValidationError("stft_recon_loss: reference and generated lengths differ");
  auto a = x.dim() == 1 ? x.unsqueeze(0) : x;
  auto b = x_hat.dim() == 1 ? x_hat.unsqueeze(0) : x_hat;
  return torch::abs(frontend.log_mel(a.to(b.dtype())) - frontend.log_mel(b)).mean();
}

}  // namespace stylevc
