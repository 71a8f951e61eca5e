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

#include "stylevc/hvae.hpp"

#include <cmath>
#include <sstream>

#include "stylevc/errors.hpp"

namespace stylevc {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

GaussianParams split_params(const torch::Tensor& stats, int latent) {
  auto mean = stats.narrow(1, 0, latent);
  auto log_std = torch::clamp(stats.narrow(1, latent, latent), kLogStdMin, kLogStdMax);
  return {mean, log_std};
}

torch::Tensor gaussian_log_prob(const torch::Tensor& x, const GaussianParams& p) {
  auto scaled = (x - p.mean) * torch::exp(-p.log_std);
  return -p.log_std - kHalfLog2Pi - 0.5 * scaled * scaled;
}

torch::Tensor masked_mean(const torch::Tensor& value, const torch::Tensor& mask) {
  const double channels = static_cast<double>(value.size(1));
  return (value * mask).sum() / (mask.sum() * channels);
}

void check_finite(const torch::Tensor& t, const char* what, std::ostringstream& report, bool& ok) {
  const bool finite = torch::isfinite(t).all().item<bool>();
  report << what << (finite ? "=ok " : "=NON-FINITE ");
  ok = ok && finite;
}

}  // namespace

GaussianEncoderImpl::GaussianEncoderImpl(int in_channels, int latent, int hidden, int kernel,
                                         int dilation_rate, int layers, int cond_dim)
    : in_channels_(in_channels), latent_(latent) {
  pre_ = register_module("pre", torch::nn::Conv1d(torch::nn::Conv1dOptions(in_channels, hidden, 1)));
  wavenet_ = register_module("wavenet", WaveNet(hidden, kernel, dilation_rate, layers, cond_dim));
  proj_ = register_module("proj", torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, 2 * latent, 1)));
}

GaussianParams GaussianEncoderImpl::forward(const torch::Tensor& x, const torch::Tensor& mask,
                                            const torch::Tensor& s) {
  auto h = pre_->forward(x) * mask;
  h = wavenet_->forward(h, mask, s);
  auto stats = proj_->forward(h) * mask;
  return split_params(stats, latent_);
}

MeanCouplingImpl::MeanCouplingImpl(int channels, int hidden, int kernel, int dilation_rate,
                                   int layers, int cond_dim)
    : half_(channels / 2) {
  pre_ = register_module("pre", torch::nn::Conv1d(torch::nn::Conv1dOptions(half_, hidden, 1)));
  wavenet_ = register_module("wavenet", WaveNet(hidden, kernel, dilation_rate, layers, cond_dim));
  post_ = register_module("post", torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, half_, 1)));
  torch::NoGradGuard guard;
  post_->weight.zero_();
  post_->bias.zero_();
}

torch::Tensor MeanCouplingImpl::shift(const torch::Tensor& x0, const torch::Tensor& mask,
                                      const torch::Tensor& s) {
  auto h = pre_->forward(x0) * mask;
  h = wavenet_->forward(h, mask, s);
  return post_->forward(h) * mask;
}

torch::Tensor MeanCouplingImpl::forward(const torch::Tensor& x, const torch::Tensor& mask,
                                        const torch::Tensor& s, bool inverse) {
  auto x0 = x.narrow(1, 0, half_);
  auto x1 = x.narrow(1, half_, half_);
  auto m = shift(x0, mask, s);
  x1 = inverse ? (x1 - m) * mask : (m + x1 * mask);
  return torch::cat({x0, x1}, 1);
}

torch::Tensor MeanCouplingImpl::scale(const torch::Tensor& x, const torch::Tensor& mask,
                                      const torch::Tensor& s) {
  // Mean-only: the log-scale branch is identically zero.
  auto m = shift(x.narrow(1, 0, half_), mask, s);
  return torch::exp(torch::zeros_like(m));
}

CouplingFlowImpl::CouplingFlowImpl(int channels, int hidden, int kernel, int dilation_rate,
                                   int wavenet_layers, int couplings, int cond_dim) {
  if (channels % 2 != 0)
    throw ConfigError("coupling flow needs an even latent dimension, got " + std::to_string(channels));
  for (int i = 0; i < couplings; ++i)
    couplings_.push_back(register_module(
        "coupling_" + std::to_string(i),
        MeanCoupling(channels, hidden, kernel, dilation_rate, wavenet_layers, cond_dim)));
}

torch::Tensor CouplingFlowImpl::forward(const torch::Tensor& z, const torch::Tensor& mask,
                                        const torch::Tensor& s, FlowDirection direction) {
  auto x = z;
  if (direction == FlowDirection::kForward) {
    for (auto& c : couplings_) x = c->forward(x, mask, s, false).flip({1});
  } else {
    for (auto it = couplings_.rbegin(); it != couplings_.rend(); ++it)
      x = (*it)->forward(x.flip({1}), mask, s, true);
  }
  return x;
}

std::vector<torch::Tensor> CouplingFlowImpl::scales(const torch::Tensor& z, const torch::Tensor& mask,
                                                    const torch::Tensor& s) {
  std::vector<torch::Tensor> out;
  auto x = z;
  for (auto& c : couplings_) {
    out.push_back(c->scale(x, mask, s));
    x = c->forward(x, mask, s, false).flip({1});
  }
  return out;
}

ProsodyDecoderImpl::ProsodyDecoderImpl(int latent, int hidden, int heads, int layers, int bins)
    : bins_(bins) {
  in_ = register_module("in", torch::nn::Linear(latent, hidden));
  for (int i = 0; i < layers; ++i)
    blocks_.push_back(
        register_module("block_" + std::to_string(i), FftBlock(hidden, heads, 2 * hidden, 3)));
  out_ = register_module("out", torch::nn::Linear(hidden, bins));
}

torch::Tensor ProsodyDecoderImpl::forward(const torch::Tensor& z, const torch::Tensor& mask) {
  auto m = mask.squeeze(1);  // [B, T]
  auto x = in_->forward(z.transpose(1, 2)) * m.unsqueeze(-1);
  for (auto& b : blocks_) x = b->forward(x, m);
  return out_->forward(x).transpose(1, 2) * mask;
}

HierarchicalVaeImpl::HierarchicalVaeImpl(const HvaeConfig& cfg, int spec_bins, int content_dim,
                                         int style_dim)
    : cfg_(cfg) {
  if (cfg.latent_dim % 2 != 0)
    throw ConfigError("hvae.latent_dim must be even, got " + std::to_string(cfg.latent_dim));
  const int L = cfg.latent_dim, H = cfg.hidden, K = cfg.kernel, D = cfg.dilation_rate;
  restorer_ = register_module(
      "restorer", GaussianEncoder(content_dim, L, H, K, D, cfg.encoder_layers, style_dim));
  ling_encoder_ = register_module(
      "linguistic_encoder", GaussianEncoder(content_dim, L, H, K, D, cfg.encoder_layers, style_dim));
  acoustic_encoder_ = register_module(
      "acoustic_encoder", GaussianEncoder(spec_bins, L, H, K, D, cfg.encoder_layers, style_dim));
  acoustic_prior_ = register_module(
      "acoustic_prior", GaussianEncoder(L, L, H, K, D, cfg.encoder_layers, style_dim));
  flow_l_ = register_module(
      "flow_l", CouplingFlow(L, H, K, D, cfg.flow_wavenet_layers, cfg.flow_couplings, style_dim));
  flow_a_ = register_module(
      "flow_a", CouplingFlow(L, H, K, D, cfg.flow_wavenet_layers, cfg.flow_couplings, style_dim));
  prosody_ = register_module("prosody", ProsodyDecoder(L, cfg.prosody_hidden, cfg.prosody_heads,
                                                       cfg.prosody_layers, cfg.prosody_bins));
}

void HierarchicalVaeImpl::check_inputs(const torch::Tensor& x, const torch::Tensor& mask,
                                       std::int64_t channels, const char* what) const {
  if (!x.defined() || x.dim() != 3)
    throw ValidationError(std::string(what) + ": expected [B, C, T] input");
  if (x.size(2) == 0) throw ValidationError(std::string(what) + ": zero-length input");
  if (x.size(1) != channels)
    throw ValidationError(std::string(what) + ": expected " + std::to_string(channels) +
                          " channels, got " + std::to_string(x.size(1)));
  if (mask.size(0) != x.size(0) || mask.size(2) != x.size(2))
    throw ValidationError(std::string(what) + ": frame count " + std::to_string(x.size(2)) +
                          " does not match mask " + std::to_string(mask.size(2)));
}

GaussianParams HierarchicalVaeImpl::restorer_prior(const torch::Tensor& c, const torch::Tensor& mask,
                                                   const torch::Tensor& s) {
  check_inputs(c, mask, restorer_->in_channels(), "restorer_prior");
  return restorer_->forward(c, mask, s);
}

LatentState sample_latent(const GaussianParams& params, const torch::Tensor& mask, Rng& rng,
                          double temperature) {
  LatentState st;
  st.params = params;
  st.noise = rng.normal(params.mean.sizes(), params.mean.scalar_type());
  st.z = (params.mean + torch::exp(params.log_std) * st.noise * temperature) * mask;
  return st;
}

LatentState HierarchicalVaeImpl::linguistic_posterior(const torch::Tensor& x_w2v,
                                                      const torch::Tensor& mask,
                                                      const torch::Tensor& s, Rng& rng) {
  check_inputs(x_w2v, mask, ling_encoder_->in_channels(), "linguistic_posterior");
  return sample_latent(ling_encoder_->forward(x_w2v, mask, s), mask, rng);
}

LatentState HierarchicalVaeImpl::acoustic_posterior(const torch::Tensor& x_spec,
                                                    const torch::Tensor& mask,
                                                    const torch::Tensor& s, Rng& rng) {
  check_inputs(x_spec, mask, acoustic_encoder_->in_channels(), "acoustic_posterior");
  return sample_latent(acoustic_encoder_->forward(x_spec, mask, s), mask, rng);
}

GaussianParams HierarchicalVaeImpl::acoustic_prior(const torch::Tensor& z_l, const torch::Tensor& mask,
                                                   const torch::Tensor& s) {
  check_inputs(z_l, mask, cfg_.latent_dim, "acoustic_prior");
  return acoustic_prior_->forward(z_l, mask, s);
}

torch::Tensor HierarchicalVaeImpl::flow_apply(const torch::Tensor& z, const torch::Tensor& mask,
                                              const torch::Tensor& s, FlowDirection direction,
                                              FlowKind which) {
  check_inputs(z, mask, cfg_.latent_dim, "flow_apply");
  return flow(which)->forward(z, mask, s, direction);
}

torch::Tensor HierarchicalVaeImpl::prosody_decode(const torch::Tensor& z_l, const torch::Tensor& mask) {
  check_inputs(z_l, mask, cfg_.latent_dim, "prosody_decode");
  return prosody_->forward(z_l, mask);
}

ElboOutput HierarchicalVaeImpl::elbo_losses(const ElboInputs& in, const torch::Tensor& s, Rng& rng) {
  ElboOutput out;
  out.linguistic = linguistic_posterior(in.content, in.mask, s, rng);
  out.prior_linguistic = restorer_prior(in.content_pert, in.mask, s);
  out.linguistic.flowed = flow_l_->forward(out.linguistic.z, in.mask, s, FlowDirection::kForward);
  out.kl_linguistic = kl_term(out.linguistic, out.prior_linguistic, in.mask);

  out.acoustic = acoustic_posterior(in.spec, in.mask, s, rng);
  out.prior_acoustic = acoustic_prior(out.linguistic.z, in.mask, s);
  out.acoustic.flowed = flow_a_->forward(out.acoustic.z, in.mask, s, FlowDirection::kForward);
  out.kl_acoustic = kl_term(out.acoustic, out.prior_acoustic, in.mask);

  out.prosody_pred = prosody_decode(out.linguistic.z, in.mask);
  out.prosody = prosody_loss(out.prosody_pred, in.mel, in.mask);

  std::ostringstream report;
  bool ok = true;
  check_finite(out.linguistic.params.mean, "q_l.mean", report, ok);
  check_finite(out.prior_linguistic.mean, "p_l.mean", report, ok);
  check_finite(out.linguistic.flowed, "f_l(z_l)", report, ok);
  check_finite(out.acoustic.params.mean, "q_a.mean", report, ok);
  check_finite(out.prior_acoustic.mean, "p_a.mean", report, ok);
  check_finite(out.acoustic.flowed, "f_a(z_a)", report, ok);
  check_finite(out.kl_linguistic, "kl_l", report, ok);
  check_finite(out.kl_acoustic, "kl_a", report, ok);
  check_finite(out.prosody, "prosody", report, ok);
  if (!ok) throw NumericalError("elbo_losses produced non-finite values: " + report.str());
  return out;
}

torch::Tensor kl_term(const LatentState& posterior, const GaussianParams& prior,
                      const torch::Tensor& mask) {
  if (!posterior.flowed.defined())
    throw ValidationError("kl_term: posterior has no flowed sample");
  if (posterior.flowed.sizes() != prior.mean.sizes() || posterior.z.sizes() != prior.mean.sizes())
    throw ValidationError("kl_term: posterior and prior shapes differ");
  auto log_q = gaussian_log_prob(posterior.z, posterior.params);
  auto log_p = gaussian_log_prob(posterior.flowed, prior);
  return masked_mean(log_q - log_p, mask);
}

torch::Tensor gaussian_kl(const GaussianParams& q, const GaussianParams& p, const torch::Tensor& mask) {
  auto diff = q.mean - p.mean;
  auto kl = p.log_std - q.log_std - 0.5 +
            0.5 * (torch::exp(2.0 * q.log_std) + diff * diff) * torch::exp(-2.0 * p.log_std);
  return masked_mean(kl, mask);
}

torch::Tensor prosody_loss(const torch::Tensor& pred, const torch::Tensor& mel,
                           const torch::Tensor& mask) {
  const auto bins = pred.size(1);
  if (mel.size(1) < bins || mel.size(2) != pred.size(2) || mel.size(0) != pred.size(0))
    throw ValidationError("prosody_loss: prediction and mel shapes differ");
  auto target = mel.narrow(1, 0, bins);
  return masked_mean(torch::abs(pred - target), mask);
}

}  // namespace stylevc
