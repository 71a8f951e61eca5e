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
#include "stylevc/layers.hpp"
#include "stylevc/rng.hpp"

namespace stylevc {

inline constexpr double kLogStdMin = -9.0;
inline constexpr double kLogStdMax = 2.0;

// Diagonal Gaussian over a [B, latent, T] latent; log_std is clamped to
// [kLogStdMin, kLogStdMax] at construction time by every producer.
struct GaussianParams {
  torch::Tensor mean;
  torch::Tensor log_std;
};

struct LatentState {
  torch::Tensor z;      // mean + exp(log_std) * noise, masked
  torch::Tensor noise;  // the standard-normal draw used for z
  GaussianParams params;
  torch::Tensor flowed;  // f(z), filled in once the level's flow has run
};

enum class FlowDirection { kForward, kInverse };
enum class FlowKind { kLinguistic, kAcoustic };

// Conv-in, WaveNet, conv-out to (mean, log_std). Used for both posterior
// encoders, the linguistic restorer and the acoustic prior.
class GaussianEncoderImpl : public torch::nn::Module {
 public:
  GaussianEncoderImpl(int in_channels, int latent, int hidden, int kernel, int dilation_rate,
                      int layers, int cond_dim);
  GaussianParams forward(const torch::Tensor& x, const torch::Tensor& mask, const torch::Tensor& s);
  int num_layers() const { return wavenet_->num_layers(); }
  int hidden() const { return wavenet_->hidden(); }
  int in_channels() const { return in_channels_; }

 private:
  int in_channels_;
  int latent_;
  torch::nn::Conv1d pre_{nullptr}, proj_{nullptr};
  WaveNet wavenet_{nullptr};
};
TORCH_MODULE(GaussianEncoder);

// Mean-only affine coupling: the second half is shifted by a function of the
// first half, so the Jacobian determinant is 1. The output projection starts
// at zero, which makes a freshly built flow the identity map.
class MeanCouplingImpl : public torch::nn::Module {
 public:
  MeanCouplingImpl(int channels, int hidden, int kernel, int dilation_rate, int layers, int cond_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask, const torch::Tensor& s,
                        bool inverse);
  // exp(log-scale) of the coupling; identically one.
  torch::Tensor scale(const torch::Tensor& x, const torch::Tensor& mask, const torch::Tensor& s);

 private:
  torch::Tensor shift(const torch::Tensor& x0, const torch::Tensor& mask, const torch::Tensor& s);
  int half_;
  torch::nn::Conv1d pre_{nullptr}, post_{nullptr};
  WaveNet wavenet_{nullptr};
};
TORCH_MODULE(MeanCoupling);

// Couplings interleaved with channel reversal.
class CouplingFlowImpl : public torch::nn::Module {
 public:
  CouplingFlowImpl(int channels, int hidden, int kernel, int dilation_rate, int wavenet_layers,
                   int couplings, int cond_dim);
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& mask, const torch::Tensor& s,
                        FlowDirection direction);
  // Coupling scales seen along the forward pass, one tensor per coupling.
  std::vector<torch::Tensor> scales(const torch::Tensor& z, const torch::Tensor& mask,
                                    const torch::Tensor& s);
  int num_couplings() const { return static_cast<int>(couplings_.size()); }

 private:
  std::vector<MeanCoupling> couplings_;
};
TORCH_MODULE(CouplingFlow);

// Feed-forward transformer mapping z_l to the lowest mel bins.
class ProsodyDecoderImpl : public torch::nn::Module {
 public:
  ProsodyDecoderImpl(int latent, int hidden, int heads, int layers, int bins);
  // z: [B, latent, T] -> [B, bins, T]
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& mask);
  int bins() const { return bins_; }

 private:
  int bins_;
  torch::nn::Linear in_{nullptr}, out_{nullptr};
  std::vector<FftBlock> blocks_;
};
TORCH_MODULE(ProsodyDecoder);

struct ElboInputs {
  torch::Tensor spec;          // [B, bins, T]
  torch::Tensor mel;           // [B, n_mels, T]
  torch::Tensor content;       // [B, D, T]   x_w2v
  torch::Tensor content_pert;  // [B, D, T]   condition c
  torch::Tensor mask;          // [B, 1, T]
};

struct ElboOutput {
  torch::Tensor kl_linguistic;
  torch::Tensor kl_acoustic;
  torch::Tensor prosody;
  LatentState linguistic;
  LatentState acoustic;
  GaussianParams prior_linguistic;
  GaussianParams prior_acoustic;
  torch::Tensor prosody_pred;
};

// Linguistic restorer, both posterior encoders, both flows, the acoustic
// prior and the prosody decoder.
class HierarchicalVaeImpl : public torch::nn::Module {
 public:
  HierarchicalVaeImpl(const HvaeConfig& cfg, int spec_bins, int content_dim, int style_dim);

  // p(z_l | c, s)
  GaussianParams restorer_prior(const torch::Tensor& c, const torch::Tensor& mask,
                                const torch::Tensor& s);
  // q(z_l | x_w2v, s)
  LatentState linguistic_posterior(const torch::Tensor& x_w2v, const torch::Tensor& mask,
                                   const torch::Tensor& s, Rng& rng);
  // q(z_a | x_spec, s)
  LatentState acoustic_posterior(const torch::Tensor& x_spec, const torch::Tensor& mask,
                                 const torch::Tensor& s, Rng& rng);
  // p(f_a(z_a) | z_l, s)
  GaussianParams acoustic_prior(const torch::Tensor& z_l, const torch::Tensor& mask,
                                const torch::Tensor& s);
  torch::Tensor flow_apply(const torch::Tensor& z, const torch::Tensor& mask,
                           const torch::Tensor& s, FlowDirection direction, FlowKind which);
  torch::Tensor prosody_decode(const torch::Tensor& z_l, const torch::Tensor& mask);

  ElboOutput elbo_losses(const ElboInputs& in, const torch::Tensor& s, Rng& rng);

  const HvaeConfig& config() const { return cfg_; }
  GaussianEncoder restorer() const { return restorer_; }
  GaussianEncoder linguistic_encoder() const { return ling_encoder_; }
  GaussianEncoder acoustic_encoder() const { return acoustic_encoder_; }
  GaussianEncoder acoustic_prior_net() const { return acoustic_prior_; }
  CouplingFlow flow(FlowKind which) const { return which == FlowKind::kLinguistic ? flow_l_ : flow_a_; }
  ProsodyDecoder prosody_decoder() const { return prosody_; }

 private:
  void check_inputs(const torch::Tensor& x, const torch::Tensor& mask, std::int64_t channels,
                    const char* what) const;

  HvaeConfig cfg_;
  GaussianEncoder restorer_{nullptr}, ling_encoder_{nullptr}, acoustic_encoder_{nullptr},
      acoustic_prior_{nullptr};
  CouplingFlow flow_l_{nullptr}, flow_a_{nullptr};
  ProsodyDecoder prosody_{nullptr};
};
TORCH_MODULE(HierarchicalVae);

// Draws mean + exp(log_std) * noise * temperature, masked.
LatentState sample_latent(const GaussianParams& params, const torch::Tensor& mask, Rng& rng,
                          double temperature = 1.0);

// Single-sample Monte-Carlo KL in flowed space:
//   mean over valid frames and dims of log q(z) - log p(flowed).
torch::Tensor kl_term(const LatentState& posterior, const GaussianParams& prior,
                      const torch::Tensor& mask);

// Closed-form KL(q || p) for diagonal Gaussians, same reduction as kl_term.
torch::Tensor gaussian_kl(const GaussianParams& q, const GaussianParams& p, const torch::Tensor& mask);

// Mean-L1 between the predicted low band and mel rows [0, bins).
torch::Tensor prosody_loss(const torch::Tensor& pred, const torch::Tensor& mel,
                           const torch::Tensor& mask);

}  // namespace stylevc
