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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "stylevc/audio.hpp"
#include "stylevc/checkpoint.hpp"
#include "stylevc/config.hpp"
#include "stylevc/content.hpp"
#include "stylevc/errors.hpp"
#include "stylevc/perturb.hpp"
#include "stylevc/pipeline.hpp"
#include "stylevc/toy_corpus.hpp"
#include "stylevc/trainer.hpp"

namespace fs = std::filesystem;
using namespace stylevc;

namespace {

Config load_config(const std::string& path, const std::string& preset) {
  if (!path.empty()) return Config::load(path);
  if (preset == "paper") return Config::paper_scale();
  if (preset == "desk") return Config::desk_scale();
  throw ConfigError("unknown preset '" + preset + "' (expected desk or paper)");
}

void apply_content_override(Config& cfg, const std::string& command) {
  if (command.empty()) return;
  cfg.content.backend = "external";
  cfg.content.external_command = command;
}

int cmd_perturb(const std::string& in, const std::string& out, std::uint64_t seed,
                const std::string& config, double formant, double pitch, bool no_peq) {
  const Config cfg = load_config(config, "desk");
  const auto w = load_and_resample(in, cfg.frontend.sample_rate);
  Rng rng(seed);
  auto draw = sample_perturbation(cfg.perturb, w.sample_rate, rng);
  if (formant > 0.0) draw.formant_ratio = formant;
  if (pitch > 0.0) draw.pitch_ratio = pitch;
  if (no_peq) draw.bands.clear();
  write_wav(out, apply_perturbation(w, draw));
  std::cout << nlohmann::json{{"formant_ratio", draw.formant_ratio},
                              {"pitch_ratio", draw.pitch_ratio},
                              {"peq_bands", draw.bands.size()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_extract(const std::string& manifest_path, const std::string& out, const std::string& config,
                const std::string& backend, const std::string& content_cmd, bool perturbed,
                std::uint64_t seed) {
  Config cfg = load_config(config, "desk");
  apply_content_override(cfg, content_cmd);
  if (!backend.empty()) cfg.content.backend = backend;
  const auto manifest = read_manifest(manifest_path);
  const auto extractor = make_extractor(cfg.content, cfg.frontend.hop);
  Rng rng(seed);
  std::vector<FeatureRecord> records;
  for (const auto& r : manifest.records) {
    auto w = load_and_resample(r.path, cfg.frontend.sample_rate);
    if (perturbed) w = perturb(w, cfg.perturb, rng);
    records.push_back({r.utt_id, extractor->extract(w).values});
  }
  write_feature_records(out, records);
  std::cout << "wrote " << records.size() << " feature records to " << out << '\n';
  return 0;
}

int cmd_train(const std::string& config, const std::string& manifest_path, const std::string& out_dir,
              const std::string& resume, std::int64_t max_steps) {
  Config cfg = load_config(config, "desk");
  TrainState state = resume.empty() ? TrainState(cfg) : load_checkpoint(resume);
  if (!resume.empty()) cfg = state.cfg;
  fs::create_directories(out_dir);
  cfg.save((fs::path(out_dir) / "config.json").string());

  const auto manifest = read_manifest(manifest_path);
  std::shared_ptr<const ContentExtractor> extractor = make_extractor(cfg.content, cfg.frontend.hop);
  Dataset data(cfg, extractor);
  Rng data_rng(cfg.train.seed ^ 0x5eedULL);
  for (const auto& r : manifest.records) {
    try {
      data.add(r.utt_id, r.speaker_id, load_and_resample(r.path, cfg.frontend.sample_rate), data_rng);
    } catch (const ValidationError& e) {
      std::cerr << "skipping " << r.utt_id << ": " << e.what() << '\n';
    }
  }
  if (data.size() == 0) throw ValidationError("no usable utterances in " + manifest_path);
  std::cout << "training on " << data.size() << " utterances from step " << state.step << '\n';
  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.max_steps = max_steps;
  opts.on_step = [&](const TrainState& st, const LossBreakdown& l) {
    if (st.step % st.cfg.train.log_interval == 0)
      std::cout << "step " << st.step << " " << l.to_json().dump() << std::endl;
    return true;
  };
  train(state, data, opts);
  std::cout << "checkpoint: " << (fs::path(out_dir) / "latest.ckpt").string() << '\n';
  return 0;
}

std::shared_ptr<TrainState> load_model(const std::string& ckpt, const std::string& content_cmd,
                                       std::shared_ptr<const ContentExtractor>& extractor) {
  auto state = std::make_shared<TrainState>(load_checkpoint(ckpt));
  Config cfg = state->cfg;
  apply_content_override(cfg, content_cmd);
  extractor = make_extractor(cfg.content, cfg.frontend.hop);
  return state;
}

int cmd_convert(const ConversionRequest& req, const std::string& ckpt, const std::string& out,
                const std::string& content_cmd) {
  std::shared_ptr<const ContentExtractor> extractor;
  auto state = load_model(ckpt, content_cmd, extractor);
  Converter conv(state, extractor);
  const auto audio = conv.convert(req);
  write_wav(out, audio);
  std::cout << "wrote " << audio.duration() << " s to " << out << '\n';
  return 0;
}

int cmd_eval(const std::string& pairs_path, const std::string& ckpt, const std::string& report,
             const std::string& content_cmd, const std::string& asr_cmd, const std::string& sv_cmd) {
  std::shared_ptr<const ContentExtractor> extractor;
  auto state = load_model(ckpt, content_cmd, extractor);
  Converter conv(state, extractor);
  EvalBackends backends;
  if (!asr_cmd.empty()) backends.asr = std::make_shared<SubprocessAsr>(asr_cmd);
  if (!sv_cmd.empty()) backends.verification = std::make_shared<SubprocessVerification>(sv_cmd);
  const auto result = evaluate(conv, read_eval_pairs(pairs_path), backends);
  std::ofstream f(report);
  if (!f) throw IoError("cannot write report " + report);
  f << result.dump(2) << '\n';
  std::cout << result["aggregate"].dump() << '\n';
  return 0;
}

int cmd_build_manifest(const std::string& root, const std::string& out, const std::string& pattern) {
  const auto m = build_manifest(root, pattern);
  write_manifest(out, m);
  for (const auto& s : m.skipped) std::cerr << "skipped " << s.path << ": " << s.reason << '\n';
  std::cout << m.records.size() << " records, " << m.skipped.size() << " skipped\n";
  return 0;
}

int cmd_toy_corpus(const std::string& out_dir, int speakers, int utterances, std::uint64_t seed) {
  write_toy_corpus(out_dir, make_toy_corpus(speakers, utterances, seed));
  std::cout << "wrote " << speakers * utterances << " utterances under " << out_dir << '\n';
  return 0;
}

// External content backend protocol served by the stub extractor.
int cmd_stub_backend(const std::string& in, const std::string& out, int dim, std::uint64_t seed) {
  const auto w = load_and_resample(in, 16000);
  const FeatureRecord rec{fs::path(in).stem().string(), stub_extract(w, seed, dim).values};
  write_feature_records(out, std::span<const FeatureRecord>(&rec, 1));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot voice style transfer: training, conversion and evaluation"};
  app.require_subcommand(1);
  torch::set_num_threads(std::max(1, static_cast<int>(std::thread::hardware_concurrency())));

  std::string in, out, config, content_cmd, manifest, out_dir, resume, ckpt, report, root,
      pattern = "*.wav", asr_cmd, sv_cmd, backend;
  std::uint64_t seed = 0;
  double formant = 0.0, pitch = 0.0;
  bool no_peq = false, perturbed = false;
  std::int64_t max_steps = -1;
  int speakers = 5, utterances = 20, dim = 1024, layer = -1;
  ConversionRequest req;

  auto* perturb_cmd = app.add_subcommand("perturb", "Apply a random speaker perturbation to a WAV file");
  perturb_cmd->add_option("--in", in, "Input WAV")->required();
  perturb_cmd->add_option("--out", out, "Output WAV")->required();
  perturb_cmd->add_option("--seed", seed, "Random seed");
  perturb_cmd->add_option("--config", config, "Config file (desk preset when omitted)");
  perturb_cmd->add_option("--formant-ratio", formant, "Fixed formant ratio instead of a random one");
  perturb_cmd->add_option("--pitch-ratio", pitch, "Fixed pitch ratio instead of a random one");
  perturb_cmd->add_flag("--no-peq", no_peq, "Skip the parametric equalizer");

  auto* extract_cmd = app.add_subcommand("extract-features", "Extract content features for a manifest");
  extract_cmd->add_option("--manifest", manifest, "Manifest TSV")->required();
  extract_cmd->add_option("--out", out, "Output feature-record file")->required();
  extract_cmd->add_option("--config", config, "Config file");
  extract_cmd->add_option("--backend", backend, "Content backend (stub or external)")
      ->check(CLI::IsMember({"stub", "external"}));
  extract_cmd->add_option("--content-command", content_cmd, "External content backend command");
  extract_cmd->add_flag("--perturbed", perturbed, "Perturb each utterance before extraction");
  extract_cmd->add_option("--seed", seed, "Perturbation seed");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config, "Config file (desk preset when omitted)");
  train_cmd->add_option("--data-manifest", manifest, "Manifest TSV")->required();
  train_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
  train_cmd->add_option("--max-steps", max_steps, "Stop after this many total steps");

  auto* convert_cmd = app.add_subcommand("convert", "Convert a source utterance to a target voice");
  convert_cmd->add_option("--source", req.source_path, "Source WAV")->required();
  convert_cmd->add_option("--target", req.target_path, "Style reference WAV")->required();
  convert_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  convert_cmd->add_option("--out", out, "Output WAV")->required();
  convert_cmd->add_option("--temperature-l", req.temperature_l, "Linguistic prior temperature");
  convert_cmd->add_option("--temperature-a", req.temperature_a, "Acoustic prior temperature");
  convert_cmd->add_option("--seed", req.seed, "Random seed");
  convert_cmd->add_option("--extra-refs", req.extra_refs, "Additional style references to average");
  convert_cmd->add_option("--content-command", content_cmd, "External content backend command");

  auto* eval_cmd = app.add_subcommand("eval", "Objective evaluation of converted audio");
  eval_cmd->add_option("--manifest", manifest, "TSV of converted, target, source paths")->required();
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--report", report, "Output JSON report")->required();
  eval_cmd->add_option("--content-command", content_cmd, "External content backend command");
  eval_cmd->add_option("--asr-command", asr_cmd, "External ASR client command");
  eval_cmd->add_option("--verification-command", sv_cmd, "External speaker-verification client command");

  auto* manifest_cmd = app.add_subcommand("build-manifest", "Index a directory of WAV files");
  manifest_cmd->add_option("--root", root, "Corpus root")->required();
  manifest_cmd->add_option("--out", out, "Output TSV")->required();
  manifest_cmd->add_option("--pattern", pattern, "File-name glob");

  auto* toy_cmd = app.add_subcommand("make-toy-corpus", "Synthesize a small multi-speaker corpus");
  toy_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  toy_cmd->add_option("--speakers", speakers, "Number of speakers");
  toy_cmd->add_option("--utterances", utterances, "Utterances per speaker");
  toy_cmd->add_option("--seed", seed, "Random seed");

  auto* stub_cmd = app.add_subcommand("stub-backend", "Stub content backend (external protocol)");
  stub_cmd->group("");
  stub_cmd->add_option("--in", in)->required();
  stub_cmd->add_option("--out", out)->required();
  stub_cmd->add_option("--layer", layer);
  stub_cmd->add_option("--dim", dim);
  stub_cmd->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*perturb_cmd) return cmd_perturb(in, out, seed, config, formant, pitch, no_peq);
    if (*extract_cmd) return cmd_extract(manifest, out, config, backend, content_cmd, perturbed, seed);
    if (*train_cmd) return cmd_train(config, manifest, out_dir, resume, max_steps);
    if (*convert_cmd) return cmd_convert(req, ckpt, out, content_cmd);
    if (*eval_cmd) return cmd_eval(manifest, ckpt, report, content_cmd, asr_cmd, sv_cmd);
    if (*manifest_cmd) return cmd_build_manifest(root, out, pattern);
    if (*toy_cmd) return cmd_toy_corpus(out_dir, speakers, utterances, seed);
    if (*stub_cmd) return cmd_stub_backend(in, out, dim, seed ? seed : ContentConfig{}.stub_seed);
  } catch (const Error& e) {
    std::cerr << "error[" << e.kind() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
