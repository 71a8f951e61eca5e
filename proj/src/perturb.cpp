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

#include "stylevc/perturb.hpp"

#include <cmath>
#include <complex>

#include <torch/torch.h>

#include "stylevc/errors.hpp"

namespace stylevc {
namespace {

constexpr int kFftSize = 1024;
constexpr int kOversample = 4;
constexpr int kHop = kFftSize / kOversample;
// Cepstral coefficients kept for the envelope; well below the pitch period
// of any voice in the 50-600 Hz range at 16 kHz.
constexpr int kLifter = 24;

void check_ratio(double ratio, const char* what) {
  if (!(ratio >= 0.5 && ratio <= 2.0))
    throw ValidationError(std::string(what) + ": ratio " + std::to_string(ratio) +
                          " outside [0.5, 2]");
}

torch::Tensor to_tensor(const Waveform& w) {
  return torch::tensor(std::vector<double>(w.samples.begin(), w.samples.end()), torch::kFloat64);
}

Waveform from_tensor(const torch::Tensor& t, int sample_rate) {
  auto c = t.to(torch::kFloat32).contiguous();
  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
  return out;
}

double rms(const std::vector<float>& x) {
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : std::sqrt(acc / x.size());
}

}  // namespace

Waveform formant_shift(const Waveform& w, double ratio) {
  check_ratio(ratio, "formant_shift");
  w.validate();
  const std::int64_t n = static_cast<std::int64_t>(w.size());
  auto x = to_tensor(w);
  // Reflect padding inside stft needs at least half a frame.
  const std::int64_t padded_len = std::max<std::int64_t>(n, kFftSize);
  if (padded_len > n) x = torch::constant_pad_nd(x, {0, padded_len - n});
  auto window = torch::hann_window(kFftSize, torch::kFloat64);
  auto spec = torch::stft(x, kFftSize, kHop, kFftSize, window, /*center=*/true, "reflect",
                          /*normalized=*/false, /*onesided=*/true, /*return_complex=*/true);

  const std::int64_t bins = spec.size(0);
  auto log_mag = torch::log(spec.abs() + 1e-9);
  auto cep = torch::fft::irfft(log_mag, kFftSize, 0);
  auto lifter = torch::zeros({kFftSize, 1}, torch::kFloat64);
  lifter.narrow(0, 0, kLifter + 1).fill_(1.0);
  lifter.narrow(0, kFftSize - kLifter, kLifter).fill_(1.0);
  auto envelope = torch::real(torch::fft::rfft(cep * lifter, kFftSize, 0));  // [bins, T]

  // Warped envelope: new(f) = old(f / ratio), linear interpolation on bins.
  auto pos = torch::arange(bins, torch::kFloat64) / ratio;
  auto lo = torch::clamp(pos.floor(), 0, bins - 1);
  auto hi = torch::clamp(lo + 1, 0, bins - 1);
  auto frac = (pos - lo).clamp(0.0, 1.0).unsqueeze(1);
  auto warped = envelope.index_select(0, lo.to(torch::kLong)) * (1.0 - frac) +
                envelope.index_select(0, hi.to(torch::kLong)) * frac;
  auto shifted = spec * torch::exp(warped - envelope);

  auto y = torch::istft(shifted, kFftSize, kHop, kFftSize, window, /*center=*/true,
                        /*normalized=*/false, /*onesided=*/true, padded_len);
  y = y.narrow(0, 0, n);
  Waveform out = from_tensor(y, w.sample_rate);
  const double in_rms = rms(w.samples), out_rms = rms(out.samples);
  if (out_rms > 0.0 && in_rms > 0.0) {
    const float gain = static_cast<float>(in_rms / out_rms);
    for (float& s : out.samples) s *= gain;
  }
  return out;
}

Waveform pitch_randomize(const Waveform& w, double ratio) {
  check_ratio(ratio, "pitch_randomize");
  w.validate();
  const std::int64_t n = static_cast<std::int64_t>(w.size());
  const std::int64_t padded_len = n + 2 * kFftSize;
  const std::int64_t n_frames = (padded_len - kFftSize + kHop - 1) / kHop + 1;
  const std::int64_t total = (n_frames - 1) * kHop + kFftSize;

  auto x = torch::zeros({total}, torch::kFloat64);
  x.narrow(0, kFftSize, n).copy_(to_tensor(w));
  auto window = torch::hann_window(kFftSize, torch::kFloat64);
  auto frames = x.unfold(0, kFftSize, kHop) * window;  // [M, N]
  auto spectra = torch::fft::rfft(frames, kFftSize, 1).contiguous();
  const int bins = kFftSize / 2 + 1;

  auto* ana = reinterpret_cast<std::complex<double>*>(spectra.data_ptr<c10::complex<double>>());
  auto synth = torch::zeros_like(spectra);
  auto* syn = reinterpret_cast<std::complex<double>*>(synth.data_ptr<c10::complex<double>>());

  const double expected = 2.0 * M_PI * kHop / kFftSize;
  std::vector<double> last_phase(bins, 0.0), sum_phase(bins, 0.0);
  std::vector<double> ana_freq(bins), syn_mag(bins), syn_freq(bins);
  for (std::int64_t m = 0; m < n_frames; ++m) {
    const std::complex<double>* a = ana + m * bins;
    for (int k = 0; k < bins; ++k) {
      const double phase = std::arg(a[k]);
      double dp = phase - last_phase[k] - k * expected;
      last_phase[k] = phase;
      dp -= 2.0 * M_PI * std::round(dp / (2.0 * M_PI));
      ana_freq[k] = k + kOversample * dp / (2.0 * M_PI);  // in bins
    }
    std::fill(syn_mag.begin(), syn_mag.end(), 0.0);
    std::fill(syn_freq.begin(), syn_freq.end(), 0.0);
    for (int k = 0; k < bins; ++k) {
      const int target = static_cast<int>(k * ratio);
      if (target >= bins) break;
      syn_mag[target] += std::abs(a[k]);
      syn_freq[target] = ana_freq[k] * ratio;
    }
    std::complex<double>* s = syn + m * bins;
    for (int k = 0; k < bins; ++k) {
      const double dev = syn_freq[k] - k;
      sum_phase[k] += 2.0 * M_PI * dev / kOversample + k * expected;
      s[k] = std::polar(syn_mag[k], sum_phase[k]);
    }
  }

  auto out_frames = torch::fft::irfft(synth, kFftSize, 1) * window;  // [M, N]
  auto y = torch::zeros({total}, torch::kFloat64);
  auto norm = torch::zeros({total}, torch::kFloat64);
  auto wsq = window * window;
  for (std::int64_t m = 0; m < n_frames; ++m) {
    y.narrow(0, m * kHop, kFftSize).add_(out_frames[m]);
    norm.narrow(0, m * kHop, kFftSize).add_(wsq);
  }
  y = y / norm.clamp_min(1e-8);
  return from_tensor(y.narrow(0, kFftSize, n), w.sample_rate);
}

Waveform parametric_eq(const Waveform& w, std::span<const PeqBand> bands) {
  w.validate();
  const double nyquist = w.sample_rate / 2.0;
  for (const auto& b : bands) {
    if (!(b.center_hz > 0.0 && b.center_hz < nyquist))
      throw ValidationError("parametric_eq: center " + std::to_string(b.center_hz) +
                            " Hz outside (0, nyquist)");
    if (!(b.q > 0.0)) throw ValidationError("parametric_eq: Q must be positive");
  }
  std::vector<double> x(w.samples.begin(), w.samples.end());
  for (const auto& b : bands) {
    const double a = std::pow(10.0, b.gain_db / 40.0);
    const double w0 = 2.0 * M_PI * b.center_hz / w.sample_rate;
    const double alpha = std::sin(w0) / (2.0 * b.q);
    const double a0 = 1.0 + alpha / a;
    const double b0 = (1.0 + alpha * a) / a0, b1 = -2.0 * std::cos(w0) / a0,
                 b2 = (1.0 - alpha * a) / a0;
    const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha / a) / a0;
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& s : x) {
      const double y = b0 * s + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = s;
      y2 = y1;
      y1 = y;
      s = y;
    }
  }
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(x.begin(), x.end());
  return out;
}

PerturbDraw sample_perturbation(const PerturbConfig& cfg, int sample_rate, Rng& rng) {
  PerturbDraw d;
  d.formant_ratio = rng.log_uniform(cfg.formant_shift_min, cfg.formant_shift_max);
  d.pitch_ratio = rng.log_uniform(cfg.pitch_shift_min, cfg.pitch_shift_max);
  const double max_center = std::min(cfg.peq_center_max, 0.45 * sample_rate);
  for (int i = 0; i < cfg.peq_bands; ++i) {
    PeqBand b;
    b.center_hz = rng.log_uniform(std::min(cfg.peq_center_min, max_center), max_center);
    b.gain_db = rng.uniform(cfg.peq_gain_min, cfg.peq_gain_max);
    b.q = rng.log_uniform(cfg.peq_q_min, cfg.peq_q_max);
    d.bands.push_back(b);
  }
  return d;
}

Waveform apply_perturbation(const Waveform& w, const PerturbDraw& draw) {
  Waveform y = formant_shift(w, draw.formant_ratio);
  y = pitch_randomize(y, draw.pitch_ratio);
  return parametric_eq(y, draw.bands);
}

Waveform perturb(const Waveform& w, const PerturbConfig& cfg, Rng& rng) {
  return apply_perturbation(w, sample_perturbation(cfg, w.sample_rate, rng));
}

}  // namespace stylevc
