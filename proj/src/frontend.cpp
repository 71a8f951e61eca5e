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

#include "stylevc/frontend.hpp"

#include <cmath>
#include <vector>

#include "stylevc/errors.hpp"

namespace stylevc {
namespace {

double hz_to_mel(double f) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double logstep = std::log(6.4) / 27.0;
  if (f < min_log_hz) return f / f_sp;
  return min_log_hz / f_sp + std::log(f / min_log_hz) / logstep;
}

double mel_to_hz(double m) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (m < min_log_mel) return m * f_sp;
  return min_log_hz * std::exp(logstep * (m - min_log_mel));
}

// Normalised cross-correlation of x[0, W) against x[k, k + W) for every lag
// in [lo, hi]; x must hold W + hi samples.
void nccf(const double* x, int window, int lo, int hi, std::vector<double>& out) {
  out.assign(hi - lo + 1, 0.0);
  double e0 = 0.0;
  for (int n = 0; n < window; ++n) e0 += x[n] * x[n];
  double ek = 0.0;
  for (int n = lo; n < lo + window; ++n) ek += x[n] * x[n];
  for (int k = lo; k <= hi; ++k) {
    if (k > lo) ek += x[k + window - 1] * x[k + window - 1] - x[k - 1] * x[k - 1];
    double cross = 0.0;
    for (int n = 0; n < window; ++n) cross += x[n] * x[n + k];
    const double denom = std::sqrt(e0 * std::max(ek, 0.0));
    out[k - lo] = denom > 0.0 ? cross / denom : 0.0;
  }
}

}  // namespace

torch::Tensor slaney_mel_filterbank(int sample_rate, int n_fft, int n_mels, double fmin,
                                    double fmax) {
  const int bins = n_fft / 2 + 1;
  std::vector<double> fft_freqs(bins);
  for (int i = 0; i < bins; ++i) fft_freqs[i] = static_cast<double>(i) * sample_rate / n_fft;
  const double mmin = hz_to_mel(fmin), mmax = hz_to_mel(fmax);
  std::vector<double> mel_f(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    mel_f[i] = mel_to_hz(mmin + (mmax - mmin) * i / (n_mels + 1));

  auto basis = torch::zeros({n_mels, bins}, torch::kFloat32);
  auto acc = basis.accessor<float, 2>();
  for (int m = 0; m < n_mels; ++m) {
    const double lower_w = mel_f[m + 1] - mel_f[m];
    const double upper_w = mel_f[m + 2] - mel_f[m + 1];
    const double enorm = 2.0 / (mel_f[m + 2] - mel_f[m]);
    for (int k = 0; k < bins; ++k) {
      const double lower = (fft_freqs[k] - mel_f[m]) / lower_w;
      const double upper = (mel_f[m + 2] - fft_freqs[k]) / upper_w;
      acc[m][k] = static_cast<float>(std::max(0.0, std::min(lower, upper)) * enorm);
    }
  }
  return basis;
}

Frontend::Frontend(FrontendConfig cfg) : cfg_(std::move(cfg)) {
  window_ = torch::hann_window(cfg_.win, torch::kFloat32);
  mel_basis_ = slaney_mel_filterbank(cfg_.sample_rate, cfg_.n_fft, cfg_.n_mels, cfg_.fmin, cfg_.fmax);
}

void Frontend::check_input(const Waveform& w, std::int64_t min_len, const char* what) const {
  if (w.sample_rate != cfg_.sample_rate)
    throw ValidationError(std::string(what) + ": waveform at " + std::to_string(w.sample_rate) +
                          " Hz, expected " + std::to_string(cfg_.sample_rate) + " Hz");
  if (static_cast<std::int64_t>(w.size()) < min_len)
    throw ValidationError(std::string(what) + ": waveform of " + std::to_string(w.size()) +
                          " samples is shorter than the " + std::to_string(min_len) +
                          "-sample analysis window");
}

torch::Tensor Frontend::magnitude(const torch::Tensor& audio) const {
  STYLEVC_CHECK(audio.dim() == 2, "magnitude expects [B, T] audio");
  const int total = cfg_.n_fft - cfg_.hop;
  const int left = total / 2;
  const int right = total - left;
  STYLEVC_CHECK(audio.size(1) > std::max(left, right), "audio too short for reflect padding");
  auto padded = torch::nn::functional::pad(
      audio.unsqueeze(1), torch::nn::functional::PadFuncOptions({left, right}).mode(torch::kReflect));
  auto spec = torch::stft(padded.squeeze(1), cfg_.n_fft, cfg_.hop, cfg_.win,
                          window_.to(audio.dtype()), /*normalized=*/false, /*onesided=*/true,
                          /*return_complex=*/true);
  return spec.abs();
}

torch::Tensor Frontend::mel_from_magnitude(const torch::Tensor& magnitude) const {
  auto mel = torch::matmul(mel_basis_.to(magnitude.dtype()), magnitude);
  return torch::log(torch::clamp_min(mel, cfg_.log_floor));
}

torch::Tensor Frontend::log_mel(const torch::Tensor& audio) const {
  return mel_from_magnitude(magnitude(audio));
}

Spectrogram Frontend::linear_spectrogram(const Waveform& w) const {
  check_input(w, cfg_.win, "linear_spectrogram");
  torch::NoGradGuard guard;
  auto audio = torch::from_blob(const_cast<float*>(w.samples.data()),
                                {1, static_cast<std::int64_t>(w.size())}, torch::kFloat32);
  Spectrogram s;
  s.values = magnitude(audio).squeeze(0).contiguous();
  s.hop = cfg_.hop;
  s.window = cfg_.win;
  return s;
}

MelSpectrogram Frontend::mel_spectrogram(const Waveform& w) const {
  check_input(w, cfg_.win, "mel_spectrogram");
  torch::NoGradGuard guard;
  auto audio = torch::from_blob(const_cast<float*>(w.samples.data()),
                                {1, static_cast<std::int64_t>(w.size())}, torch::kFloat32);
  return MelSpectrogram{log_mel(audio).squeeze(0).contiguous()};
}

PitchTrack Frontend::extract_f0(const Waveform& w) const {
  check_input(w, cfg_.f0_window, "extract_f0");
  const int hop = cfg_.f0_hop;
  const int window = cfg_.f0_window;
  const int lo = std::max(2, static_cast<int>(std::floor(cfg_.sample_rate / cfg_.f0_max)));
  const int hi = static_cast<int>(std::ceil(cfg_.sample_rate / cfg_.f0_min));
  const std::int64_t n_samples = static_cast<std::int64_t>(w.size());
  const std::int64_t n_frames = n_samples / hop;
  // Frames whose energy is below -80 dBFS RMS are silent.
  const double silence = window * 1e-8;

  PitchTrack track;
  track.log_f0 = torch::zeros({n_frames}, torch::kFloat32);
  track.voiced = torch::zeros({n_frames}, torch::kBool);
  auto f0_acc = track.log_f0.accessor<float, 1>();
  auto v_acc = track.voiced.accessor<bool, 1>();

  const int span = window + hi + 2;
  std::vector<double> seg(span);
  std::vector<double> r;
  for (std::int64_t t = 0; t < n_frames; ++t) {
    const std::int64_t start = t * hop + hop / 2 - window / 2;
    double mean = 0.0;
    for (int n = 0; n < span; ++n) {
      const std::int64_t idx = start + n;
      seg[n] = (idx >= 0 && idx < n_samples) ? w.samples[idx] : 0.0;
      if (n < window) mean += seg[n];
    }
    mean /= window;
    double energy = 0.0;
    for (int n = 0; n < span; ++n) seg[n] -= mean;
    for (int n = 0; n < window; ++n) energy += seg[n] * seg[n];
    if (energy < silence) continue;

    // Evaluate one lag beyond each end so peaks at the range limits can be
    // interpolated.
    nccf(seg.data(), window, lo - 1, hi + 1, r);
    double best = -1.0;
    for (int k = 1; k + 1 < static_cast<int>(r.size()); ++k)
      if (r[k] > r[k - 1] && r[k] >= r[k + 1]) best = std::max(best, r[k]);
    if (best < cfg_.voicing_threshold) continue;
    // Shortest lag whose peak is close to the best one; this avoids
    // locking onto multiples of the period.
    int pick = -1;
    for (int k = 1; k + 1 < static_cast<int>(r.size()); ++k) {
      if (r[k] > r[k - 1] && r[k] >= r[k + 1] && r[k] >= 0.9 * best) {
        pick = k;
        break;
      }
    }
    const double denom = r[pick - 1] - 2.0 * r[pick] + r[pick + 1];
    const double delta = denom != 0.0 ? 0.5 * (r[pick - 1] - r[pick + 1]) / denom : 0.0;
    const double lag = (lo - 1) + pick + std::clamp(delta, -0.5, 0.5);
    const double f0 = std::clamp(cfg_.sample_rate / lag, cfg_.f0_min, cfg_.f0_max);
    f0_acc[t] = static_cast<float>(std::log(f0));
    v_acc[t] = true;
  }
  return track;
}

void check_alignment(const FeatureBundle& b, int hop, int f0_per_frame) {
  const std::int64_t frames = b.spec.frames();
  auto fail = [&](const std::string& what) {
    throw ValidationError("bundle '" + b.utt_id + "' misaligned: " + what);
  };
  if (b.audio.numel() != frames * hop) fail("audio length != frames * hop");
  if (b.mel.frames() != frames) fail("mel frames != spectrogram frames");
  if (b.content.values.defined() && b.content.frames() != frames) fail("content frames");
  if (b.content_pert.values.defined() && b.content_pert.frames() != frames)
    fail("perturbed content frames");
  if (b.pitch.frames() != frames * f0_per_frame) fail("pitch frames != frames * hop/f0_hop");
}

FeatureBundle slice_aligned(const FeatureBundle& b, std::int64_t start, std::int64_t n, int hop,
                            int f0_per_frame) {
  const std::int64_t frames = b.frames();
  if (start < 0 || n <= 0 || start + n > frames)
    throw ValidationError("slice [" + std::to_string(start) + ", " + std::to_string(start + n) +
                          ") out of range for " + std::to_string(frames) + " frames");
  FeatureBundle out;
  out.utt_id = b.utt_id;
  out.audio = b.audio.narrow(0, start * hop, n * hop);
  out.spec = b.spec;
  out.spec.values = b.spec.values.narrow(1, start, n);
  out.mel.values = b.mel.values.narrow(1, start, n);
  out.content = b.content;
  if (b.content.values.defined()) out.content.values = b.content.values.narrow(0, start, n);
  out.content_pert = b.content_pert;
  if (b.content_pert.values.defined())
    out.content_pert.values = b.content_pert.values.narrow(0, start, n);
  out.pitch.log_f0 = b.pitch.log_f0.narrow(0, start * f0_per_frame, n * f0_per_frame);
  out.pitch.voiced = b.pitch.voiced.narrow(0, start * f0_per_frame, n * f0_per_frame);
  return out;
}

}  // namespace stylevc
