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

#include "stylevc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "stylevc/checkpoint.hpp"
#include "stylevc/errors.hpp"
#include "stylevc/layers.hpp"
#include "stylevc/perturb.hpp"

namespace stylevc {

nlohmann::json LossBreakdown::to_json() const {
  return {{"stft", stft},
          {"pitch", pitch},
          {"kl_linguistic", kl_linguistic},
          {"kl_acoustic", kl_acoustic},
          {"prosody", prosody},
          {"adv_gen", adv_gen},
          {"adv_disc", adv_disc},
          {"feat_match", feat_match},
          {"total_gen", total_gen},
          {"total_disc", total_disc},
          {"null_style_items", null_style_items}};
}

bool LossBreakdown::all_finite() const {
  for (double v : {stft, pitch, kl_linguistic, kl_acoustic, prosody, adv_gen, adv_disc, feat_match,
                   total_gen, total_disc})
    if (!std::isfinite(v)) return false;
  return true;
}

double weighted_generator_total(const LossBreakdown& l, const LossWeights& w) {
  return w.stft * l.stft + w.pitch * l.pitch + w.kl_linguistic * l.kl_linguistic +
         w.kl_acoustic * l.kl_acoustic + w.prosody * l.prosody + w.adv * l.adv_gen +
         w.feat_match * l.feat_match;
}

Batch collate(std::span<const FeatureBundle> bundles, const FrontendConfig& fcfg) {
  if (bundles.empty()) throw ValidationError("collate: empty batch");
  const int hop = fcfg.hop, fpf = fcfg.f0_per_frame();
  std::int64_t max_t = 0;
  for (const auto& b : bundles) {
    check_alignment(b, hop, fpf);
    if (!b.content.values.defined() || !b.content_pert.values.defined())
      throw ValidationError("collate: bundle '" + b.utt_id + "' lacks content features");
    max_t = std::max(max_t, b.frames());
  }
  const auto n = static_cast<std::int64_t>(bundles.size());
  const auto& first = bundles.front();
  Batch out;
  out.spec = torch::zeros({n, first.spec.bins(), max_t});
  out.mel = torch::zeros({n, first.mel.n_mels(), max_t});
  out.content = torch::zeros({n, first.content.dim(), max_t});
  out.content_pert = torch::zeros({n, first.content_pert.dim(), max_t});
  out.audio = torch::zeros({n, max_t * hop});
  out.log_f0 = torch::zeros({n, max_t * fpf});
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& b = bundles[i];
    const auto t = b.frames();
    if (b.spec.bins() != first.spec.bins() || b.content.dim() != first.content.dim())
      throw ValidationError("collate: feature dimensions differ within the batch");
    out.spec[i].narrow(1, 0, t).copy_(b.spec.values);
    out.mel[i].narrow(1, 0, t).copy_(b.mel.values);
    out.content[i].narrow(1, 0, t).copy_(b.content.values.t());
    out.content_pert[i].narrow(1, 0, t).copy_(b.content_pert.values.t());
    out.audio[i].narrow(0, 0, t * hop).copy_(b.audio);
    out.log_f0[i].narrow(0, 0, t * fpf).copy_(b.pitch.log_f0);
    out.lengths.push_back(t);
  }
  out.mask = sequence_mask(torch::tensor(out.lengths, torch::kInt64), max_t);
  return out;
}

namespace {

Waveform truncate_to_frames(const Waveform& w, int hop) {
  Waveform out = w;
  out.samples.resize(w.size() / hop * hop);
  return out;
}

ContentFeatures aligned_content(const ContentExtractor& extractor, const Waveform& w,
                                std::int64_t frames) {
  auto c = extractor.extract(w);
  c.values = align_frames(c.values, frames).contiguous();
  return c;
}

torch::Tensor to_tensor(const Waveform& w) {
  return torch::tensor(w.samples, torch::kFloat32);
}

Waveform to_waveform(const torch::Tensor& t, int sample_rate) {
  auto c = t.to(torch::kFloat32).contiguous();
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
  return w;
}

void set_requires_grad(const std::vector<std::pair<std::string, torch::Tensor>>& params, bool on) {
  for (const auto& [name, p] : params) p.set_requires_grad(on);
}

std::vector<torch::Tensor> tensors_of(const std::vector<std::pair<std::string, torch::Tensor>>& named) {
  std::vector<torch::Tensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

void append_named(std::vector<std::pair<std::string, torch::Tensor>>& out, const std::string& prefix,
                  const torch::OrderedDict<std::string, torch::Tensor>& items) {
  for (const auto& item : items) out.emplace_back(prefix + "." + item.key(), item.value());
}

std::unique_ptr<torch::optim::AdamW> make_optimizer(std::vector<torch::Tensor> params,
                                                    const TrainConfig& tc, double lr) {
  return std::make_unique<torch::optim::AdamW>(
      std::move(params), torch::optim::AdamWOptions(lr)
                             .betas({tc.beta1, tc.beta2})
                             .eps(tc.adam_eps)
                             .weight_decay(tc.weight_decay));
}

}  // namespace

FeatureBundle build_bundle(const std::string& utt_id, const Waveform& audio, const Frontend& frontend,
                           const ContentExtractor& extractor, const PerturbConfig& pcfg, Rng& rng) {
  audio.validate();
  const auto& f = frontend.config();
  if (audio.sample_rate != f.sample_rate)
    throw ValidationError("build_bundle: '" + utt_id + "' is at " + std::to_string(audio.sample_rate) +
                          " Hz, expected " + std::to_string(f.sample_rate));
  const Waveform w = truncate_to_frames(audio, f.hop);
  FeatureBundle b;
  b.utt_id = utt_id;
  b.audio = to_tensor(w);
  b.spec = frontend.linear_spectrogram(w);
  b.mel = frontend.mel_spectrogram(w);
  b.pitch = frontend.extract_f0(w);
  const auto frames = b.spec.frames();
  b.content = aligned_content(extractor, w, frames);
  refresh_perturbed_content(b, extractor, pcfg, f.sample_rate, rng);
  check_alignment(b, f.hop, f.f0_per_frame());
  return b;
}

void refresh_perturbed_content(FeatureBundle& b, const ContentExtractor& extractor,
                               const PerturbConfig& pcfg, int sample_rate, Rng& rng) {
  const auto w = to_waveform(b.audio, sample_rate);
  b.content_pert = aligned_content(extractor, perturb(w, pcfg, rng), b.frames());
}

Waveform loop_pad(const Waveform& w, std::int64_t samples) {
  w.validate();
  Waveform out = w;
  while (static_cast<std::int64_t>(out.size()) < samples)
    out.samples.insert(out.samples.end(), w.samples.begin(), w.samples.end());
  return out;
}

Dataset::Dataset(const Config& cfg, std::shared_ptr<const ContentExtractor> extractor)
    : cfg_(cfg), frontend_(cfg.frontend), extractor_(std::move(extractor)) {
  if (!extractor_) throw ValidationError("Dataset: no content extractor");
}

void Dataset::add(const std::string& utt_id, const std::string& speaker_id, Waveform audio, Rng& rng) {
  const auto min_samples = static_cast<std::size_t>(cfg_.train.window_samples);
  if (audio.size() < min_samples)
    throw ValidationError("utterance '" + utt_id + "' is shorter than the training window (" +
                          std::to_string(audio.size()) + " < " + std::to_string(min_samples) +
                          " samples)");
  Utterance u;
  u.utt_id = utt_id;
  u.speaker_id = speaker_id;
  u.features = build_bundle(utt_id, audio, frontend_, *extractor_, cfg_.perturb, rng);
  u.audio = std::move(audio);
  items_.push_back(std::move(u));
}

FeatureBundle Dataset::sample_segment(std::size_t i, Rng& rng) const {
  const auto& b = items_.at(i).features;
  const std::int64_t seg = cfg_.train.segment_samples / cfg_.frontend.hop;
  const std::int64_t frames = b.frames();
  FeatureBundle out = b;
  if (frames > seg) {
    const auto start = rng.index(frames - seg + 1);
    out = slice_aligned(b, start, seg, cfg_.frontend.hop, cfg_.frontend.f0_per_frame());
  }
  if (!cfg_.perturb.cache) refresh_perturbed_content(out, *extractor_, cfg_.perturb, cfg_.frontend.sample_rate, rng);
  return out;
}

std::vector<FeatureBundle> Dataset::sample_batch(int batch_size, Rng& rng) const {
  if (items_.empty()) throw ValidationError("Dataset: no utterances");
  std::vector<FeatureBundle> out;
  out.reserve(batch_size);
  for (int k = 0; k < batch_size; ++k)
    out.push_back(sample_segment(static_cast<std::size_t>(rng.index(items_.size())), rng));
  return out;
}

UncondConfig uncond_for(const TrainConfig& cfg, TrainMode mode) {
  return UncondConfig{mode == TrainMode::kFineTune ? 0.0 : cfg.p_uncond};
}

TrainState::TrainState(Config c) : cfg(std::move(c)), frontend(cfg.frontend), rng(cfg.train.seed) {
  cfg.validate();
  torch::manual_seed(cfg.train.seed);
  style = StyleEncoder(cfg.style, cfg.frontend.n_mels);
  hvae = HierarchicalVae(cfg.hvae, cfg.frontend.spec_bins(), cfg.content.feature_dim,
                         cfg.style.style_dim);
  hag = Hag(cfg.hag, cfg.frontend, cfg.hvae.latent_dim, cfg.style.style_dim);
  disc = Discriminator(cfg.disc);
  reset_optimizers(cfg.train.learning_rate);
  check_optimizer_separation();
}

std::vector<std::pair<std::string, torch::Tensor>> TrainState::generator_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  append_named(out, "style", style->named_parameters());
  append_named(out, "hvae", hvae->named_parameters());
  append_named(out, "hag", hag->named_parameters());
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> TrainState::discriminator_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  append_named(out, "disc", disc->named_parameters());
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> TrainState::buffers() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  append_named(out, "style", style->named_buffers());
  append_named(out, "hvae", hvae->named_buffers());
  append_named(out, "hag", hag->named_buffers());
  append_named(out, "disc", disc->named_buffers());
  return out;
}

double TrainState::learning_rate() const {
  return static_cast<const torch::optim::AdamWOptions&>(opt_gen->param_groups().front().options()).lr();
}

void TrainState::set_learning_rate(double lr) {
  for (auto* opt : {opt_gen.get(), opt_disc.get()})
    for (auto& group : opt->param_groups())
      static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
}

void TrainState::reset_optimizers(double lr) {
  opt_gen = make_optimizer(tensors_of(generator_parameters()), cfg.train, lr);
  opt_disc = make_optimizer(tensors_of(discriminator_parameters()), cfg.train, lr);
}

void TrainState::train_mode(bool on) {
  style->train(on);
  hvae->train(on);
  hag->train(on);
  disc->train(on);
}

void TrainState::check_optimizer_separation() const {
  std::set<const void*> gen;
  for (const auto& group : opt_gen->param_groups())
    for (const auto& p : group.params()) gen.insert(p.unsafeGetTensorImpl());
  for (const auto& group : opt_disc->param_groups())
    for (const auto& p : group.params())
      if (gen.count(p.unsafeGetTensorImpl()))
        throw ValidationError("a parameter is owned by both the generator and discriminator optimizers");
}

std::vector<std::int64_t> draw_window_starts(const std::vector<std::int64_t>& lengths,
                                             std::int64_t window_frames, Rng& rng) {
  std::vector<std::int64_t> out;
  out.reserve(lengths.size());
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < window_frames)
      throw ValidationError("item " + std::to_string(i) + " has " + std::to_string(lengths[i]) +
                            " frames, the training window needs " + std::to_string(window_frames));
    out.push_back(rng.index(lengths[i] - window_frames + 1));
  }
  return out;
}

ForwardPass generator_forward(TrainState& st, const Batch& b, Rng& rng, TrainMode mode) {
  const auto& f = st.cfg.frontend;
  const int hop = f.hop, fpf = f.f0_per_frame();
  const std::int64_t win = st.cfg.train.window_samples / hop;
  ForwardPass fp;
  fp.window_starts = draw_window_starts(b.lengths, win, rng);

  // Encoders run on the full segment.
  fp.style = st.style->forward(b.mel, b.mask);
  fp.elbo = st.hvae->elbo_losses({b.spec, b.mel, b.content, b.content_pert, b.mask}, fp.style, rng);

  // The generator and the discriminators see one aligned window per item.
  std::vector<torch::Tensor> zs, ys, f0s;
  for (std::size_t i = 0; i < b.lengths.size(); ++i) {
    const auto start = fp.window_starts[i];
    zs.push_back(fp.elbo.acoustic.z[i].narrow(1, start, win));
    ys.push_back(b.audio[i].narrow(0, start * hop, win * hop));
    f0s.push_back(b.log_f0[i].narrow(0, start * fpf, win * fpf));
  }
  fp.audio_window = torch::stack(ys);
  fp.f0_window = torch::stack(f0s);
  fp.gen = st.hag->generate(torch::stack(zs), fp.style, st.style->null_parameter(),
                            uncond_for(st.cfg.train, mode), rng, /*training_mode=*/true);
  fp.stft = stft_recon_loss(st.frontend, fp.audio_window, fp.gen.waveform);
  fp.pitch = pitch_loss(fp.gen.pitch.f0_pred, fp.f0_window);
  return fp;
}

LossBreakdown train_step(TrainState& st, std::span<const FeatureBundle> bundles, const StepOptions& opts) {
  const auto& tc = st.cfg.train;
  const auto& w = tc.weights;
  Batch b = collate(bundles, st.cfg.frontend);
  st.train_mode(true);
  auto fp = generator_forward(st, b, st.rng, opts.mode);
  const auto& elbo = fp.elbo;
  const auto& y = fp.audio_window;
  const auto& y_hat = fp.gen.waveform;

  LossBreakdown out;
  out.kl_linguistic = elbo.kl_linguistic.item<double>();
  out.kl_acoustic = elbo.kl_acoustic.item<double>();
  out.prosody = elbo.prosody.item<double>();
  out.stft = fp.stft.item<double>();
  out.pitch = fp.pitch.item<double>();
  for (bool u : fp.gen.used_null_style) out.null_style_items += u ? 1 : 0;

  auto abort = [&](const std::string& where) {
    throw NumericalError("non-finite loss in " + where + " at step " + std::to_string(st.step) +
                         ": " + out.to_json().dump());
  };
  if (!std::isfinite(out.stft) || !std::isfinite(out.pitch)) abort("reconstruction terms");

  const auto disc_params = st.discriminator_parameters();
  set_requires_grad(disc_params, true);
  auto d_real = st.disc->forward(y);
  auto d_fake = st.disc->forward(y_hat.detach());
  auto l_disc = disc_loss(d_real, d_fake);
  out.adv_disc = l_disc.item<double>();
  out.total_disc = out.adv_disc;
  if (!std::isfinite(out.adv_disc)) abort("discriminator loss");
  st.opt_disc->zero_grad();
  l_disc.backward();
  if (tc.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(tensors_of(disc_params), tc.grad_clip);
  st.opt_disc->step();

  set_requires_grad(disc_params, false);
  DiscriminatorOutput real;
  {
    torch::NoGradGuard guard;
    real = st.disc->forward(y);
  }
  auto fake = st.disc->forward(y_hat);
  auto l_adv = gen_adv_loss(fake);
  auto l_fm = feature_matching_loss(real, fake);
  out.adv_gen = l_adv.item<double>();
  out.feat_match = l_fm.item<double>();
  out.total_gen = weighted_generator_total(out, w);
  if (!out.all_finite()) {
    set_requires_grad(disc_params, true);
    abort("generator loss");
  }
  auto total = w.stft * fp.stft + w.pitch * fp.pitch + w.kl_linguistic * elbo.kl_linguistic +
               w.kl_acoustic * elbo.kl_acoustic + w.prosody * elbo.prosody + w.adv * l_adv +
               w.feat_match * l_fm;
  st.opt_gen->zero_grad();
  total.backward();
  if (tc.grad_clip > 0.0)
    torch::nn::utils::clip_grad_norm_(tensors_of(st.generator_parameters()), tc.grad_clip);
  st.opt_gen->step();
  set_requires_grad(disc_params, true);
  ++st.step;
  return out;
}

void train(TrainState& st, const Dataset& data, const TrainOptions& opts) {
  const auto& tc = st.cfg.train;
  const std::int64_t max_steps = opts.max_steps >= 0 ? opts.max_steps : tc.total_steps;
  const std::int64_t steps_per_epoch =
      std::max<std::int64_t>(1, (static_cast<std::int64_t>(data.size()) + tc.batch_size - 1) /
                                    tc.batch_size);
  std::ofstream log;
  namespace fs = std::filesystem;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    log.open(fs::path(opts.out_dir) / "metrics.jsonl", std::ios::app);
    if (!log) throw IoError("cannot open metrics log in " + opts.out_dir);
  }
  const auto t0 = std::chrono::steady_clock::now();
  while (st.step < max_steps) {
    st.epoch = st.step / steps_per_epoch;
    st.set_learning_rate(tc.learning_rate * std::pow(tc.lr_decay, static_cast<double>(st.epoch)));
    const auto batch = data.sample_batch(tc.batch_size, st.rng);
    const auto losses = train_step(st, batch);
    if (log.is_open() && (st.step % tc.log_interval == 0 || st.step == max_steps)) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << nlohmann::json{{"step", st.step},
                            {"losses", losses.to_json()},
                            {"lr", st.learning_rate()},
                            {"wall_time", wall}}
                 .dump()
          << '\n';
      log.flush();
    }
    if (!opts.out_dir.empty() && st.step % tc.checkpoint_interval == 0) {
      save_checkpoint(st, (fs::path(opts.out_dir) / ("step_" + std::to_string(st.step) + ".ckpt")).string());
      save_checkpoint(st, (fs::path(opts.out_dir) / "latest.ckpt").string());
    }
    if (opts.on_step && !opts.on_step(st, losses)) break;
  }
  if (!opts.out_dir.empty()) save_checkpoint(st, (fs::path(opts.out_dir) / "latest.ckpt").string());
}

void fine_tune_one_shot(TrainState& st, const Waveform& target, const ContentExtractor& extractor,
                        const FineTuneOptions& opts) {
  if (opts.steps < 0) throw ValidationError("fine_tune_one_shot: negative step count");
  if (!(opts.learning_rate > 0.0)) throw ValidationError("fine_tune_one_shot: learning rate must be positive");
  if (opts.steps == 0) return;
  auto padded = loop_pad(target, st.cfg.train.segment_samples);
  std::shared_ptr<const ContentExtractor> borrowed(&extractor, [](const ContentExtractor*) {});
  Dataset data(st.cfg, borrowed);
  data.add("one_shot", "", std::move(padded), st.rng);
  st.reset_optimizers(opts.learning_rate);
  for (std::int64_t k = 0; k < opts.steps; ++k) {
    const auto batch = data.sample_batch(st.cfg.train.batch_size, st.rng);
    train_step(st, batch, {TrainMode::kFineTune});
  }
}

}  // namespace stylevc
