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

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "stylevc/audio.hpp"
#include "stylevc/content.hpp"
#include "stylevc/features.hpp"
#include "stylevc/trainer.hpp"

namespace stylevc {

struct ManifestRecord {
  std::string utt_id;
  std::string path;
  std::string speaker_id;  // empty when unknown
  double duration = 0.0;
  bool operator==(const ManifestRecord&) const = default;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  std::vector<SkippedFile> skipped;
};

// Recursively collects files whose name matches the shell glob `pattern`,
// sorted by relative path. utt_id is the relative path without extension;
// speaker_id is the first directory component when there is one.
// Unreadable files go to `skipped`.
Manifest build_manifest(const std::string& root, const std::string& pattern = "*.wav");

// Tab-separated: utt_id, path, speaker_id, duration; one header line.
void write_manifest(const std::string& path, const Manifest& m);
// Validates unique utt_ids and, when check_paths, that every path exists.
Manifest read_manifest(const std::string& path, bool check_paths = true);

struct ConversionRequest {
  std::string source_path;
  std::string target_path;
  std::vector<std::string> extra_refs;  // averaged with the target style
  double temperature_l = 0.667;
  double temperature_a = 0.667;
  std::uint64_t seed = 0;
  void validate() const;
};

// Intermediate values of one conversion.
struct ConversionTrace {
  torch::Tensor style;        // [1, style_dim], from the references only
  torch::Tensor content_pert; // [1, D, T]
  torch::Tensor z_l;          // [1, latent, T]
  torch::Tensor z_a;          // [1, latent, T]
  torch::Tensor f0_pred;      // [1, T * f0_per_frame]
};

class Converter {
 public:
  Converter(std::shared_ptr<TrainState> state, std::shared_ptr<const ContentExtractor> extractor);

  Waveform convert(const ConversionRequest& req, ConversionTrace* trace = nullptr) const;
  Waveform convert(const Waveform& source, const std::vector<Waveform>& references,
                   double temperature_l, double temperature_a, std::uint64_t seed,
                   ConversionTrace* trace = nullptr) const;
  // Style vector [style_dim] of one utterance.
  torch::Tensor style_of(const Waveform& w) const;
  const TrainState& state() const { return *state_; }
  const ContentExtractor& extractor() const { return *extractor_; }

 private:
  Waveform prepare(const Waveform& w) const;
  std::shared_ptr<TrainState> state_;
  std::shared_ptr<const ContentExtractor> extractor_;
};

// External clients. Both run `<command> --in <wav> --out <file>`; the ASR
// backend writes a transcript, the verification backend whitespace-separated
// embedding values.
class AsrBackend {
 public:
  virtual ~AsrBackend() = default;
  virtual std::string transcribe(const std::string& wav_path) const = 0;
  virtual std::string name() const = 0;
};

class VerificationBackend {
 public:
  virtual ~VerificationBackend() = default;
  virtual std::vector<double> embed(const std::string& wav_path) const = 0;
  virtual std::string name() const = 0;
};

class SubprocessAsr : public AsrBackend {
 public:
  explicit SubprocessAsr(std::string command) : command_(std::move(command)) {}
  std::string transcribe(const std::string& wav_path) const override;
  std::string name() const override { return command_; }

 private:
  std::string command_;
};

class SubprocessVerification : public VerificationBackend {
 public:
  explicit SubprocessVerification(std::string command) : command_(std::move(command)) {}
  std::vector<double> embed(const std::string& wav_path) const override;
  std::string name() const override { return command_; }

 private:
  std::string command_;
};

// Null pointers mean "not configured": the dependent metrics are reported
// as unavailable.
struct EvalBackends {
  std::shared_ptr<const AsrBackend> asr;
  std::shared_ptr<const VerificationBackend> verification;
};

struct EvalPair {
  std::string converted;
  std::string target;
  std::string source;
};

// Tab-separated converted, target, source paths; '#' lines are comments.
std::vector<EvalPair> read_eval_pairs(const std::string& path);

double vector_cosine(const torch::Tensor& a, const torch::Tensor& b);
// Mean absolute log-mel difference over the common frame range.
double mel_distance(const MelSpectrogram& a, const MelSpectrogram& b);
// Pearson correlation of log-F0 over frames voiced in both tracks; empty
// when fewer than three such frames exist or a track is constant (identical
// constant tracks give 1).
std::optional<double> voiced_f0_correlation(const PitchTrack& a, const PitchTrack& b);
std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);
double character_error_rate(const std::string& reference, const std::string& hypothesis);
double word_error_rate(const std::string& reference, const std::string& hypothesis);

// Per-pair rows plus an aggregate block (means over pairs where available).
nlohmann::json evaluate(const Converter& model, const std::vector<EvalPair>& pairs,
                        const EvalBackends& backends);

}  // namespace stylevc
