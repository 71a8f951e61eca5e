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

#include "stylevc/config.hpp"

#include <fstream>
#include <numeric>

#include "stylevc/errors.hpp"

namespace stylevc {
namespace {

int product(const std::vector<int>& v) {
  return std::accumulate(v.begin(), v.end(), 1, std::multiplies<>());
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace

Config Config::paper_scale() { return Config{}; }

Config Config::desk_scale() {
  Config c;
  c.content.feature_dim = 64;
  c.style.style_dim = 64;
  c.style.hidden = 64;
  c.style.heads = 2;
  c.hvae.latent_dim = 16;
  c.hvae.hidden = 32;
  c.hvae.encoder_layers = 4;
  c.hvae.flow_couplings = 4;
  c.hvae.flow_wavenet_layers = 2;
  c.hvae.prosody_hidden = 32;
  c.hvae.prosody_layers = 2;
  c.hvae.prosody_heads = 2;
  c.hag.source_channels = 32;
  c.hag.initial_channel = 64;
  c.hag.resblock_kernels = {3, 7};
  c.hag.resblock_dilations = {{1, 3}, {1, 3}};
  c.disc.period_channels = {8, 16, 32, 32};
  c.disc.stft_filters = 8;
  c.train.batch_size = 2;
  c.train.total_steps = 2000;
  c.train.segment_samples = 19200;
  c.train.window_samples = 9600;
  c.train.checkpoint_interval = 1000;
  c.train.log_interval = 50;
  return c;
}

void Config::validate() const {
  const auto& f = frontend;
  require(f.sample_rate > 0, "frontend.sample_rate must be positive");
  require(f.hop > 0 && f.win > 0 && f.n_fft >= f.win, "frontend: need 0 < win <= n_fft, hop > 0");
  require(f.n_mels > 0, "frontend.n_mels must be positive");
  require(f.f0_hop > 0 && f.hop % f.f0_hop == 0, "frontend.hop must be a multiple of f0_hop");
  require(f.f0_min > 0 && f.f0_max > f.f0_min && f.f0_max < f.sample_rate / 2.0,
          "frontend: need 0 < f0_min < f0_max < nyquist");
  require(f.fmax <= f.sample_rate / 2.0 && f.fmin >= 0 && f.fmin < f.fmax,
          "frontend: invalid mel frequency range");

  const auto& p = perturb;
  require(p.formant_shift_min > 0 && p.formant_shift_min <= 1.0 && p.formant_shift_max >= 1.0,
          "perturb: formant range must contain 1");
  require(p.pitch_shift_min > 0 && p.pitch_shift_min <= 1.0 && p.pitch_shift_max >= 1.0,
          "perturb: pitch range must contain 1");
  require(p.formant_shift_min >= 0.5 && p.formant_shift_max <= 2.0 && p.pitch_shift_min >= 0.5 &&
              p.pitch_shift_max <= 2.0,
          "perturb: shift ratios must lie in [0.5, 2]");
  require(p.peq_bands >= 1, "perturb.peq_bands must be >= 1");
  require(p.peq_gain_min <= 0 && p.peq_gain_max >= 0, "perturb: gain range must contain 0 dB");
  require(p.peq_q_min > 0 && p.peq_q_max >= p.peq_q_min, "perturb: invalid Q range");
  require(p.peq_center_min > 0 && p.peq_center_max < f.sample_rate / 2.0 &&
              p.peq_center_max >= p.peq_center_min,
          "perturb: band centers must lie in (0, nyquist)");

  require(content.backend == "stub" || content.backend == "external",
          "content.backend must be 'stub' or 'external'");
  require(content.feature_dim >= 8, "content.feature_dim must be >= 8");
  require(content.backend != "external" || !content.external_command.empty(),
          "content.external_command is required for the external backend");

  require(style.style_dim > 0 && style.hidden > 0 && style.heads > 0, "style: sizes must be positive");
  require(style.pooling == "attentive" || style.pooling == "mean",
          "style.pooling must be 'attentive' or 'mean'");

  const auto& h = hvae;
  require(h.latent_dim > 0 && h.latent_dim % 2 == 0, "hvae.latent_dim must be even (affine coupling)");
  require(h.hidden > 0 && h.encoder_layers > 0 && h.kernel % 2 == 1,
          "hvae: need positive sizes and an odd kernel");
  require(h.flow_couplings > 0 && h.flow_wavenet_layers > 0, "hvae: flow sizes must be positive");
  require(h.prosody_bins > 0 && h.prosody_bins <= f.n_mels, "hvae.prosody_bins must be <= n_mels");
  require(h.prosody_hidden % h.prosody_heads == 0, "hvae.prosody_hidden must divide into heads");

  const auto& g = hag;
  require(product(g.upsample_rates) == f.hop,
          "hag: product of upsample_rates (" + std::to_string(product(g.upsample_rates)) +
              ") must equal frontend.hop (" + std::to_string(f.hop) + ")");
  require(product(g.source_rates) == f.f0_per_frame(),
          "hag: product of source_rates (" + std::to_string(product(g.source_rates)) +
              ") must equal hop / f0_hop (" + std::to_string(f.f0_per_frame()) + ")");
  require(g.upsample_kernels.size() == g.upsample_rates.size(),
          "hag: upsample_kernels and upsample_rates differ in length");
  require(g.source_kernels.size() == g.source_rates.size(),
          "hag: source_kernels and source_rates differ in length");
  for (size_t i = 0; i < g.upsample_rates.size(); ++i)
    require(g.upsample_kernels[i] >= g.upsample_rates[i], "hag: upsample kernel < rate");
  for (size_t i = 0; i < g.source_rates.size(); ++i)
    require(g.source_kernels[i] >= g.source_rates[i], "hag: source kernel < rate");
  require(!g.resblock_kernels.empty() && g.resblock_kernels.size() == g.resblock_dilations.size(),
          "hag: resblock kernels and dilations differ in length");
  require(g.initial_channel >> g.upsample_rates.size() >= 1,
          "hag.initial_channel too small for the number of upsample stages");
  require(g.source_channels >> g.source_rates.size() >= 1,
          "hag.source_channels too small for the number of source stages");
  // p_h enters the waveform generator once its rate reaches the F0 grid.
  int acc = 1;
  bool reaches = false;
  for (int r : g.upsample_rates) {
    acc *= r;
    if (acc == f.f0_per_frame()) reaches = true;
  }
  require(reaches, "hag: no waveform-generator stage runs at the F0 frame rate");

  require(!disc.periods.empty() && !disc.stft_windows.empty(), "disc: empty sub-discriminator list");
  require(!disc.period_channels.empty() && disc.stft_filters > 0, "disc: invalid channel config");

  const auto& t = train;
  require(t.batch_size > 0 && t.total_steps >= 0, "train: invalid batch size or step count");
  require(t.segment_samples % f.hop == 0 && t.window_samples % f.hop == 0,
          "train: segment_samples and window_samples must be multiples of hop");
  require(t.window_samples > 0 && t.window_samples <= t.segment_samples,
          "train: need 0 < window_samples <= segment_samples");
  int max_window = 0;
  for (int w : disc.stft_windows) max_window = std::max(max_window, w);
  require(t.window_samples >= max_window, "train: window shorter than the largest STFT window");
  require(t.p_uncond >= 0.0 && t.p_uncond <= 1.0, "train.p_uncond must lie in [0, 1]");
  require(t.learning_rate > 0 && t.lr_decay > 0 && t.lr_decay <= 1.0,
          "train: need learning_rate > 0 and lr_decay in (0, 1]");
  require(t.grad_clip >= 0, "train.grad_clip must be >= 0");
}

nlohmann::json Config::to_json() const {
  return nlohmann::json{{"frontend", frontend}, {"perturb", perturb}, {"content", content},
                        {"style", style},       {"hvae", hvae},       {"hag", hag},
                        {"disc", disc},         {"train", train}};
}

Config Config::from_json(const nlohmann::json& j) {
  Config c;
  // Sections absent from the document keep their defaults. A "preset" key
  // selects the base ("paper" or "desk") before the sections are applied.
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "desk")
      c = desk_scale();
    else if (preset != "paper")
      throw ConfigError("unknown preset '" + preset + "'");
  }
  try {
    auto merge = [&](const char* key, auto& section) {
      if (!j.contains(key)) return;
      nlohmann::json base = section;
      base.merge_patch(j.at(key));
      section = base.get<std::decay_t<decltype(section)>>();
    };
    merge("frontend", c.frontend);
    merge("perturb", c.perturb);
    merge("content", c.content);
    merge("style", c.style);
    merge("hvae", c.hvae);
    merge("hag", c.hag);
    merge("disc", c.disc);
    merge("train", c.train);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return from_json(j);
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file " + path);
  out << to_json().dump(2) << "\n";
}

}  // namespace stylevc
