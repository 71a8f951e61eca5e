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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "stylevc/audio.hpp"
#include "stylevc/config.hpp"
#include "stylevc/content.hpp"
#include "stylevc/discriminators.hpp"
#include "stylevc/features.hpp"
#include "stylevc/frontend.hpp"
#include "stylevc/hag.hpp"
#include "stylevc/hvae.hpp"
#include "stylevc/rng.hpp"
#include "stylevc/style_encoder.hpp"

namespace stylevc {

struct LossBreakdown {
  double stft = 0.0;
  double pitch = 0.0;
  double kl_linguistic = 0.0;
  double kl_acoustic = 0.0;
  double prosody = 0.0;
  double adv_gen = 0.0;
  double adv_disc = 0.0;
  double feat_match = 0.0;
  double total_gen = 0.0;
  double total_disc = 0.0;
  int null_style_items = 0;

  nlohmann::json to_json() const;
  bool all_finite() const;
  bool operator==(const LossBreakdown&) const = default;
};

// Weighted generator-side objective from its components.
double weighted_generator_total(const LossBreakdown& l, const LossWeights& w);

// Padded batch; every tensor shares the frame axis length T.
struct Batch {
  torch::Tensor spec;          // [B, bins, T]
  torch::Tensor mel;           // [B, n_mels, T]
  torch::Tensor content;       // [B, D, T]
  torch::Tensor content_pert;  // [B, D, T]
  torch::Tensor mask;          // [B, 1, T]
  torch::Tensor audio;         // [B, T * hop]
  torch::Tensor log_f0;        // [B, T * f0_per_frame]
  std::vector<std::int64_t> lengths;
};

Batch collate(std::span<const FeatureBundle> bundles, const FrontendConfig& fcfg);

// Computes every feature of one utterance. Audio is truncated to a whole
// number of frames. The perturbed-content path draws from `rng`.
FeatureBundle build_bundle(const std::string& utt_id, const Waveform& audio, const Frontend& frontend,
                           const ContentExtractor& extractor, const PerturbConfig& pcfg, Rng& rng);

// Recomputes content_pert for a bundle from a fresh perturbation draw.
void refresh_perturbed_content(FeatureBundle& bundle, const ContentExtractor& extractor,
                               const PerturbConfig& pcfg, int sample_rate, Rng& rng);

// Repeats the waveform until it holds at least `samples` samples.
Waveform loop_pad(const Waveform& w, std::int64_t samples);

struct Utterance {
  std::string utt_id;
  std::string speaker_id;
  Waveform audio;
  FeatureBundle features;
};

// In-memory training corpus. Segments are random frame-aligned crops of at
// most segment_samples; perturbed content is recomputed per crop unless the
// perturbation cache is enabled.
class Dataset {
 public:
  Dataset(const Config& cfg, std::shared_ptr<const ContentExtractor> extractor);
  void add(const std::string& utt_id, const std::string& speaker_id, Waveform audio, Rng& rng);
  std::size_t size() const { return items_.size(); }
  const Utterance& at(std::size_t i) const { return items_.at(i); }
  FeatureBundle sample_segment(std::size_t i, Rng& rng) const;
  std::vector<FeatureBundle> sample_batch(int batch_size, Rng& rng) const;
  const Frontend& frontend() const { return frontend_; }
  const ContentExtractor& extractor() const { return *extractor_; }

 private:
  Config cfg_;
  Frontend frontend_;
  std::shared_ptr<const ContentExtractor> extractor_;
  std::vector<Utterance> items_;
};

enum class TrainMode { kStandard, kFineTune };

// Fine-tuning is conditional-only: p_uncond is zero whatever the config says.
UncondConfig uncond_for(const TrainConfig& cfg, TrainMode mode);

class TrainState {
 public:
  explicit TrainState(Config cfg);
  TrainState(TrainState&&) = default;
  TrainState& operator=(TrainState&&) = default;

  Config cfg;
  Frontend frontend;
  StyleEncoder style{nullptr};
  HierarchicalVae hvae{nullptr};
  Hag hag{nullptr};
  Discriminator disc{nullptr};
  std::unique_ptr<torch::optim::AdamW> opt_gen;
  std::unique_ptr<torch::optim::AdamW> opt_disc;
  Rng rng;
  std::int64_t step = 0;
  std::int64_t epoch = 0;

  // Ordered (name, tensor) lists; names carry a module prefix.
  std::vector<std::pair<std::string, torch::Tensor>> generator_parameters() const;
  std::vector<std::pair<std::string, torch::Tensor>> discriminator_parameters() const;
  std::vector<std::pair<std::string, torch::Tensor>> buffers() const;

  double learning_rate() const;
  void set_learning_rate(double lr);
  // Fresh optimizers (zero moments) at the given learning rate.
  void reset_optimizers(double lr);
  void train_mode(bool on);
  // Throws if any tensor is owned by both optimizers.
  void check_optimizer_separation() const;
};

// Uniform frame-aligned window start per item; every length must be at
// least window_frames.
std::vector<std::int64_t> draw_window_starts(const std::vector<std::int64_t>& lengths,
                                             std::int64_t window_frames, Rng& rng);

// Everything the generator side computes before the adversarial terms.
struct ForwardPass {
  torch::Tensor style;  // [B, style_dim]
  ElboOutput elbo;
  std::vector<std::int64_t> window_starts;  // in acoustic frames
  torch::Tensor audio_window;               // [B, window_samples]
  torch::Tensor f0_window;                  // [B, window_frames * f0_per_frame]
  GeneratorOutput gen;
  torch::Tensor stft;
  torch::Tensor pitch;
};

ForwardPass generator_forward(TrainState& state, const Batch& batch, Rng& rng, TrainMode mode);

struct StepOptions {
  TrainMode mode = TrainMode::kStandard;
};

// One discriminator update followed by one generator-side update.
LossBreakdown train_step(TrainState& state, std::span<const FeatureBundle> batch,
                         const StepOptions& opts = {});

struct TrainOptions {
  std::string out_dir;  // empty: no log or checkpoints
  std::int64_t max_steps = -1;  // -1: cfg.train.total_steps
  std::function<bool(const TrainState&, const LossBreakdown&)> on_step;  // false stops
};

// Runs steps until max_steps, appending {step, losses, lr, wall_time}
// records to out_dir/metrics.jsonl and writing periodic checkpoints.
void train(TrainState& state, const Dataset& data, const TrainOptions& opts);

struct FineTuneOptions {
  std::int64_t steps = 1000;
  double learning_rate = 1e-4;
};

// One-shot adaptation on a single utterance, conditional generation only.
// steps == 0 leaves the state untouched.
void fine_tune_one_shot(TrainState& state, const Waveform& target, const ContentExtractor& extractor,
                        const FineTuneOptions& opts);

}  // namespace stylevc
