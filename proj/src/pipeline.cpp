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

#include "stylevc/pipeline.hpp"

#include <fnmatch.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "stylevc/errors.hpp"
#include "stylevc/perturb.hpp"

namespace stylevc {

namespace fs = std::filesystem;

Manifest build_manifest(const std::string& root, const std::string& pattern) {
  const fs::path base(root);
  std::error_code ec;
  if (!fs::is_directory(base, ec)) throw IoError("manifest root is not a readable directory: " + root);
  std::vector<fs::path> files;
  Manifest m;
  auto it = fs::recursive_directory_iterator(base, fs::directory_options::skip_permission_denied, ec);
  if (ec) throw IoError("cannot read " + root + ": " + ec.message());
  for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) {
      m.skipped.push_back({it->path().string(), ec.message()});
      ec.clear();
      continue;
    }
    if (!it->is_regular_file(ec)) continue;
    if (fnmatch(pattern.c_str(), it->path().filename().c_str(), 0) == 0) files.push_back(it->path());
  }
  std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
    return a.lexically_relative(base).generic_string() < b.lexically_relative(base).generic_string();
  });
  for (const auto& p : files) {
    const fs::path rel = p.lexically_relative(base);
    try {
      const auto info = probe_wav(p.string());
      ManifestRecord r;
      r.utt_id = (rel.parent_path() / rel.stem()).generic_string();
      r.path = p.string();
      auto first = rel.begin();
      r.speaker_id = std::distance(rel.begin(), rel.end()) > 1 ? first->string() : "";
      r.duration = info.duration();
      m.records.push_back(std::move(r));
    } catch (const Error& e) {
      m.skipped.push_back({p.string(), e.what()});
    }
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest " + path);
  f << "utt_id\tpath\tspeaker_id\tduration\n";
  char buf[64];
  for (const auto& r : m.records) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.duration);
    f << r.utt_id << '\t' << r.path << '\t' << r.speaker_id << '\t' << buf << '\n';
  }
  if (!f) throw IoError("short write to " + path);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, '\t')) out.push_back(cur);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string temp_stem() {
  static std::atomic<unsigned> counter{0};
  return "stylevc_eval_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1));
}

// Runs `<command> --in <wav> --out <tmp>` and returns the output file.
std::string run_client(const std::string& command, const std::string& wav_path) {
  const fs::path out = fs::temp_directory_path() / temp_stem();
  const std::string cmd = command + " --in " + shell_quote(wav_path) + " --out " + shell_quote(out.string());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw BackendError("'" + command + "' exited with status " + std::to_string(rc), 1);
  auto text = read_file(out.string());
  std::error_code ec;
  fs::remove(out, ec);
  return text;
}

}  // namespace

Manifest read_manifest(const std::string& path, bool check_paths) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path);
  Manifest m;
  std::string line;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.rfind("utt_id\t", 0) == 0)) continue;
    const auto cols = split_tabs(line);
    if (cols.size() < 2 || cols.size() > 4)
      throw ValidationError(path + ":" + std::to_string(line_no) + ": expected 2 to 4 tab-separated columns");
    ManifestRecord r;
    r.utt_id = cols[0];
    r.path = cols[1];
    if (cols.size() > 2) r.speaker_id = cols[2];
    if (cols.size() > 3 && !cols[3].empty()) {
      try {
        r.duration = std::stod(cols[3]);
      } catch (const std::exception&) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": bad duration '" + cols[3] + "'");
      }
    }
    if (!ids.insert(r.utt_id).second)
      throw ValidationError(path + ":" + std::to_string(line_no) + ": duplicate utt_id '" + r.utt_id + "'");
    if (check_paths && !fs::exists(r.path))
      throw IoError(path + ":" + std::to_string(line_no) + ": missing file " + r.path);
    m.records.push_back(std::move(r));
  }
  return m;
}

void ConversionRequest::validate() const {
  for (double t : {temperature_l, temperature_a})
    if (!(t >= 0.0 && t <= 1.5))
      throw ValidationError("temperatures must lie in [0, 1.5], got " + std::to_string(t));
  if (source_path.empty() || target_path.empty())
    throw ValidationError("conversion needs both a source and a target path");
}

Converter::Converter(std::shared_ptr<TrainState> state, std::shared_ptr<const ContentExtractor> extractor)
    : state_(std::move(state)), extractor_(std::move(extractor)) {
  if (!state_ || !extractor_) throw ValidationError("Converter: missing model or content extractor");
  if (extractor_->feature_dim() != state_->cfg.content.feature_dim)
    throw CheckpointError("content extractor produces " + std::to_string(extractor_->feature_dim()) +
                          "-dim features, checkpoint expects " +
                          std::to_string(state_->cfg.content.feature_dim));
}

Waveform Converter::prepare(const Waveform& w) const {
  w.validate();
  const auto& f = state_->cfg.frontend;
  Waveform out = w.sample_rate == f.sample_rate ? w : resample(w, f.sample_rate);
  out.samples.resize(out.size() / f.hop * f.hop);
  if (out.size() < static_cast<std::size_t>(f.win))
    throw ValidationError("audio is shorter than one analysis window (" + std::to_string(f.win) +
                          " samples)");
  return out;
}

torch::Tensor Converter::style_of(const Waveform& w) const {
  torch::NoGradGuard guard;
  state_->style->eval();
  const auto mel = state_->frontend.mel_spectrogram(prepare(w));
  return state_->style->encode(mel).values.reshape({-1});
}

Waveform Converter::convert(const ConversionRequest& req, ConversionTrace* trace) const {
  req.validate();
  const int sr = state_->cfg.frontend.sample_rate;
  const auto source = load_and_resample(req.source_path, sr);
  std::vector<Waveform> refs{load_and_resample(req.target_path, sr)};
  for (const auto& p : req.extra_refs) refs.push_back(load_and_resample(p, sr));
  return convert(source, refs, req.temperature_l, req.temperature_a, req.seed, trace);
}

Waveform Converter::convert(const Waveform& source_in, const std::vector<Waveform>& references,
                            double temperature_l, double temperature_a, std::uint64_t seed,
                            ConversionTrace* trace) const {
  ConversionRequest check{"source", "target", {}, temperature_l, temperature_a, seed};
  check.validate();
  if (references.empty()) throw ValidationError("convert: no style reference");
  torch::NoGradGuard guard;
  auto& st = *state_;
  st.train_mode(false);
  const auto& f = st.cfg.frontend;
  const Waveform source = prepare(source_in);
  const std::int64_t frames = static_cast<std::int64_t>(source.size()) / f.hop;
  Rng rng(seed);

  // Condition c from the perturbed source; the perturbation draw uses the
  // config seed and `seed` drives latent sampling.
  Rng perturb_rng(st.cfg.perturb.rng_seed);
  auto pert = extractor_->extract(perturb(source, st.cfg.perturb, perturb_rng));
  auto c = align_frames(pert.values, frames).t().unsqueeze(0).contiguous();

  // Style from the references only.
  torch::Tensor s;
  for (const auto& r : references) {
    auto v = style_of(r);
    s = s.defined() ? s + v : v;
  }
  s = (s / static_cast<double>(references.size())).unsqueeze(0);

  auto mask = torch::ones({1, 1, frames});
  auto prior_l = st.hvae->restorer_prior(c, mask, s);
  auto zl_flowed = sample_latent(prior_l, mask, rng, temperature_l).z;
  auto z_l = st.hvae->flow_apply(zl_flowed, mask, s, FlowDirection::kInverse, FlowKind::kLinguistic);
  auto prior_a = st.hvae->acoustic_prior(z_l, mask, s);
  auto za_flowed = sample_latent(prior_a, mask, rng, temperature_a).z;
  auto z_a = st.hvae->flow_apply(za_flowed, mask, s, FlowDirection::kInverse, FlowKind::kAcoustic);
  auto gen = st.hag->generate(z_a, s, st.style->null_parameter(), UncondConfig{0.0}, rng,
                              /*training_mode=*/false);

  if (trace) {
    trace->style = s;
    trace->content_pert = c;
    trace->z_l = z_l;
    trace->z_a = z_a;
    trace->f0_pred = gen.pitch.f0_pred;
  }
  auto audio = gen.waveform.reshape({-1}).contiguous();
  Waveform out;
  out.sample_rate = f.sample_rate;
  out.samples.assign(audio.data_ptr<float>(), audio.data_ptr<float>() + audio.numel());
  return out;
}

std::string SubprocessAsr::transcribe(const std::string& wav_path) const {
  auto text = run_client(command_, wav_path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

std::vector<double> SubprocessVerification::embed(const std::string& wav_path) const {
  std::istringstream ss(run_client(command_, wav_path));
  std::vector<double> out;
  double v;
  while (ss >> v) out.push_back(v);
  if (out.empty()) throw BackendError("'" + command_ + "' returned an empty embedding", 1);
  return out;
}

std::vector<EvalPair> read_eval_pairs(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open pair list " + path);
  std::vector<EvalPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 3)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected converted, target and source paths");
    out.push_back({cols[0], cols[1], cols[2]});
  }
  return out;
}

double vector_cosine(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.reshape({-1}).to(torch::kFloat64);
  auto y = b.reshape({-1}).to(torch::kFloat64);
  if (x.numel() != y.numel() || x.numel() == 0) throw ValidationError("vector_cosine: size mismatch");
  const double nx = x.norm().item<double>(), ny = y.norm().item<double>();
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return std::clamp((x * y).sum().item<double>() / (nx * ny), -1.0, 1.0);
}

double mel_distance(const MelSpectrogram& a, const MelSpectrogram& b) {
  if (a.n_mels() != b.n_mels()) throw ValidationError("mel_distance: band counts differ");
  const auto n = std::min(a.frames(), b.frames());
  if (n == 0) throw ValidationError("mel_distance: empty spectrogram");
  return torch::abs(a.values.narrow(1, 0, n) - b.values.narrow(1, 0, n)).mean().item<double>();
}

std::optional<double> voiced_f0_correlation(const PitchTrack& a, const PitchTrack& b) {
  const auto n = std::min(a.frames(), b.frames());
  auto both = a.voiced.narrow(0, 0, n).logical_and(b.voiced.narrow(0, 0, n));
  auto x = a.log_f0.narrow(0, 0, n).masked_select(both).to(torch::kFloat64);
  auto y = b.log_f0.narrow(0, 0, n).masked_select(both).to(torch::kFloat64);
  if (x.numel() < 3) return std::nullopt;
  auto dx = x - x.mean(), dy = y - y.mean();
  const double sxx = (dx * dx).sum().item<double>(), syy = (dy * dy).sum().item<double>();
  if (sxx == 0.0 || syy == 0.0) {
    if (torch::equal(x, y)) return 1.0;
    return std::nullopt;
  }
  return std::clamp((dx * dy).sum().item<double>() / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::vector<std::string> chars_of(const std::string& s) {
  std::vector<std::string> out;
  for (char c : s)
    if (c != ' ') out.emplace_back(1, c);
  return out;
}

std::vector<std::string> words_of(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

double error_rate(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) return hyp.empty() ? 0.0 : 1.0;
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

}  // namespace

double character_error_rate(const std::string& reference, const std::string& hypothesis) {
  return error_rate(chars_of(reference), chars_of(hypothesis));
}

double word_error_rate(const std::string& reference, const std::string& hypothesis) {
  return error_rate(words_of(reference), words_of(hypothesis));
}

nlohmann::json evaluate(const Converter& model, const std::vector<EvalPair>& pairs,
                        const EvalBackends& backends) {
  const auto& st = model.state();
  const int sr = st.cfg.frontend.sample_rate;
  const std::vector<std::string> keys = {"style_cos_target", "style_cos_source", "mel_distance",
                                         "f0_correlation",   "cer",              "wer",
                                         "verification_cos_target"};
  std::map<std::string, std::pair<double, int>> sums;
  nlohmann::json rows = nlohmann::json::array();
  auto record = [&](nlohmann::json& row, const std::string& key, std::optional<double> v) {
    if (v) {
      row[key] = *v;
      sums[key].first += *v;
      sums[key].second += 1;
    } else {
      row[key] = "unavailable";
    }
  };
  for (const auto& p : pairs) {
    const auto conv = load_and_resample(p.converted, sr);
    const auto tgt = load_and_resample(p.target, sr);
    const auto src = load_and_resample(p.source, sr);
    const auto s_conv = model.style_of(conv);
    nlohmann::json row{{"converted", p.converted}, {"target", p.target}, {"source", p.source}};
    record(row, "style_cos_target", vector_cosine(s_conv, model.style_of(tgt)));
    record(row, "style_cos_source", vector_cosine(s_conv, model.style_of(src)));
    record(row, "mel_distance",
           mel_distance(st.frontend.mel_spectrogram(conv), st.frontend.mel_spectrogram(src)));
    record(row, "f0_correlation",
           voiced_f0_correlation(st.frontend.extract_f0(conv), st.frontend.extract_f0(src)));
    std::optional<double> cer, wer, sv;
    if (backends.asr) {
      const auto ref = backends.asr->transcribe(p.source);
      const auto hyp = backends.asr->transcribe(p.converted);
      cer = character_error_rate(ref, hyp);
      wer = word_error_rate(ref, hyp);
    }
    if (backends.verification) {
      const auto a = backends.verification->embed(p.converted);
      const auto b = backends.verification->embed(p.target);
      sv = vector_cosine(torch::tensor(a, torch::kFloat64), torch::tensor(b, torch::kFloat64));
    }
    record(row, "cer", cer);
    record(row, "wer", wer);
    record(row, "verification_cos_target", sv);
    rows.push_back(std::move(row));
  }
  nlohmann::json agg{{"pairs", pairs.size()}};
  for (const auto& k : keys) {
    auto it = sums.find(k);
    if (it == sums.end() || it->second.second == 0)
      agg[k] = "unavailable";
    else
      agg[k] = it->second.first / it->second.second;
  }
  return {{"pairs", rows},
          {"aggregate", agg},
          {"backends",
           {{"asr", backends.asr ? backends.asr->name() : "unavailable"},
            {"verification", backends.verification ? backends.verification->name() : "unavailable"}}}};
}

}  // namespace stylevc
