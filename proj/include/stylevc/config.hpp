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

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace stylevc {

struct FrontendConfig {
  int sample_rate = 16000;
  int n_fft = 1280;
  int win = 1280;
  int hop = 320;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;
  int f0_hop = 80;
  int f0_window = 512;
  double f0_min = 50.0;
  double f0_max = 600.0;
  double voicing_threshold = 0.3;

  int spec_bins() const { return n_fft / 2 + 1; }
  int f0_per_frame() const { return hop / f0_hop; }
};

struct PerturbConfig {
  double formant_shift_min = 1.0 / 1.4;
  double formant_shift_max = 1.4;
  double pitch_shift_min = 0.5;
  double pitch_shift_max = 2.0;
  int peq_bands = 8;
  double peq_gain_min = -12.0;
  double peq_gain_max = 12.0;
  double peq_q_min = 2.0;
  double peq_q_max = 5.0;
  double peq_center_min = 60.0;
  double peq_center_max = 7000.0;
  std::uint64_t rng_seed = 0;
  // Precompute one perturbed copy per utterance instead of perturbing on
  // every step.
  bool cache = false;
};

struct ContentConfig {
  std::string backend = "stub";  // "stub" | "external"
  int feature_dim = 1024;
  std::uint64_t stub_seed = 20240601;
  std::string external_command;
  int layer = -1;  // forwarded to the external backend; -1 lets it choose
  int retries = 2;
};

struct StyleConfig {
  int style_dim = 256;
  int hidden = 256;
  int heads = 4;
  std::string pooling = "attentive";  // "attentive" | "mean"
};

struct HvaeConfig {
  int latent_dim = 192;
  int hidden = 192;
  int kernel = 5;
  int dilation_rate = 1;
  int encoder_layers = 16;
  int flow_couplings = 4;
  int flow_wavenet_layers = 4;
  int prosody_hidden = 768;
  int prosody_layers = 2;
  int prosody_heads = 2;
  int prosody_bins = 20;
};

struct HagConfig {
  int source_channels = 256;
  std::vector<int> source_rates = {2, 2};
  std::vector<int> source_kernels = {4, 4};
  int initial_channel = 512;
  std::vector<int> upsample_rates = {4, 5, 4, 2, 2};
  std::vector<int> upsample_kernels = {8, 11, 8, 4, 4};
  std::vector<int> resblock_kernels = {3, 7, 11};
  std::vector<std::vector<int>> resblock_dilations = {{1, 3, 5}, {1, 3, 5}, {1, 3, 5}};
};

struct DiscConfig {
  std::vector<int> periods = {2, 3, 5, 7, 11};
  std::vector<int> period_channels = {32, 128, 512, 1024, 1024};
  std::vector<int> stft_windows = {2048, 1024, 512, 256, 128};
  int stft_filters = 32;
};

struct LossWeights {
  double stft = 45.0;
  double pitch = 10.0;
  double kl_linguistic = 1.0;
  double kl_acoustic = 1.0;
  double prosody = 1.0;
  double adv = 1.0;
  double feat_match = 2.0;
};

struct TrainConfig {
  int batch_size = 128;
  std::int64_t total_steps = 600000;
  int segment_samples = 61440;
  int window_samples = 9600;
  double learning_rate = 2e-4;
  double lr_decay = 0.999;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double adam_eps = 1e-9;
  double weight_decay = 0.01;
  double p_uncond = 0.1;
  double grad_clip = 0.0;  // 0 disables clipping
  LossWeights weights;
  std::uint64_t seed = 1234;
  std::int64_t checkpoint_interval = 10000;
  std::int64_t log_interval = 100;
};

struct Config {
  FrontendConfig frontend;
  PerturbConfig perturb;
  ContentConfig content;
  StyleConfig style;
  HvaeConfig hvae;
  HagConfig hag;
  DiscConfig disc;
  TrainConfig train;

  // Reference configuration (45M-parameter inference model).
  static Config paper_scale();
  // Small configuration that trains on one CPU core.
  static Config desk_scale();

  // Throws ConfigError on any inconsistency, including the rate contracts
  // between hops and upsampling factors.
  void validate() const;

  nlohmann::json to_json() const;
  static Config from_json(const nlohmann::json& j);
  static Config load(const std::string& path);
  void save(const std::string& path) const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FrontendConfig, sample_rate, n_fft, win, hop, n_mels,
                                                fmin, fmax, log_floor, f0_hop, f0_window, f0_min,
                                                f0_max, voicing_threshold)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PerturbConfig, formant_shift_min, formant_shift_max,
                                                pitch_shift_min, pitch_shift_max, peq_bands,
                                                peq_gain_min, peq_gain_max, peq_q_min, peq_q_max,
                                                peq_center_min, peq_center_max, rng_seed, cache)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ContentConfig, backend, feature_dim, stub_seed,
                                                external_command, layer, retries)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StyleConfig, style_dim, hidden, heads, pooling)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HvaeConfig, latent_dim, hidden, kernel,
                                                dilation_rate, encoder_layers, flow_couplings,
                                                flow_wavenet_layers, prosody_hidden,
                                                prosody_layers, prosody_heads, prosody_bins)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HagConfig, source_channels, source_rates,
                                                source_kernels, initial_channel, upsample_rates,
                                                upsample_kernels, resblock_kernels,
                                                resblock_dilations)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DiscConfig, periods, period_channels,
                                                stft_windows, stft_filters)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, stft, pitch, kl_linguistic,
                                                kl_acoustic, prosody, adv, feat_match)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, batch_size, total_steps,
                                                segment_samples, window_samples, learning_rate,
                                                lr_decay, beta1, beta2, adam_eps, weight_decay,
                                                p_uncond, grad_clip, weights, seed,
                                                checkpoint_interval, log_interval)

}  // namespace stylevc
