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

#include "stylevc/toy_corpus.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "stylevc/errors.hpp"

namespace stylevc {

namespace {

constexpr int kRate = 16000;
constexpr double kPi = std::numbers::pi;

struct Vowel {
  std::array<double, 3> formants;
};

constexpr std::array<Vowel, 5> kVowels = {{
    {{730.0, 1090.0, 2440.0}},
    {{270.0, 2290.0, 3010.0}},
    {{300.0, 870.0, 2240.0}},
    {{530.0, 1840.0, 2480.0}},
    {{570.0, 840.0, 2410.0}},
}};
constexpr std::array<double, 3> kBandwidths = {80.0, 110.0, 150.0};

// Two-pole resonator with unit gain at DC.
struct Resonator {
  double y1 = 0.0, y2 = 0.0;
  double process(double x, double freq, double bw) {
    const double r = std::exp(-kPi * bw / kRate);
    const double a1 = 2.0 * r * std::cos(2.0 * kPi * freq / kRate);
    const double a2 = -r * r;
    const double g = 1.0 - a1 - a2;
    const double y = g * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

enum class Kind { kVowel, kFricative, kPause };

struct Segment {
  Kind kind;
  std::size_t samples;
  int vowel = 0;
  double fric_center = 4500.0;
};

}  // namespace

ToySpeaker toy_speaker(int index, std::uint64_t seed) {
  if (index < 0) throw ValidationError("toy_speaker: negative index");
  static const std::array<ToySpeaker, 5> table = {{
      {"spk0", 105.0, 0.12, 0.88, 1.8, 0.01, 1.10},
      {"spk1", 215.0, 0.20, 1.16, 1.0, 0.04, 0.90},
      {"spk2", 150.0, 0.10, 1.00, 2.2, 0.02, 1.00},
      {"spk3", 265.0, 0.18, 1.25, 1.3, 0.06, 0.85},
      {"spk4", 130.0, 0.15, 0.94, 1.2, 0.03, 1.05},
  }};
  if (index < static_cast<int>(table.size())) return table[index];
  Rng rng(seed * 1000003ULL + static_cast<std::uint64_t>(index));
  ToySpeaker s;
  s.id = "spk" + std::to_string(index);
  s.f0_hz = rng.log_uniform(90.0, 280.0);
  s.f0_spread = rng.uniform(0.08, 0.22);
  s.formant_scale = rng.uniform(0.85, 1.25);
  s.tilt = rng.uniform(0.9, 2.3);
  s.breathiness = rng.uniform(0.005, 0.06);
  s.tempo = rng.uniform(0.85, 1.15);
  return s;
}

Waveform synthesize_toy_utterance(const ToySpeaker& spk, Rng& rng, double min_seconds,
                                  double max_seconds) {
  if (!(min_seconds > 0.0) || max_seconds < min_seconds)
    throw ValidationError("synthesize_toy_utterance: invalid duration range");
  const auto target = static_cast<std::size_t>(rng.uniform(min_seconds, max_seconds) * kRate);

  std::vector<Segment> plan;
  std::size_t total = 0;
  plan.push_back({Kind::kPause, static_cast<std::size_t>(0.05 * kRate)});
  total += plan.back().samples;
  while (total < target) {
    const double u = rng.uniform();
    Segment seg{Kind::kVowel, 0};
    if (u < 0.65) {
      seg.vowel = static_cast<int>(rng.index(kVowels.size()));
      seg.samples = static_cast<std::size_t>(rng.uniform(0.12, 0.30) * spk.tempo * kRate);
    } else if (u < 0.85) {
      seg.kind = Kind::kFricative;
      seg.fric_center = rng.uniform(3000.0, 6000.0);
      seg.samples = static_cast<std::size_t>(rng.uniform(0.05, 0.12) * spk.tempo * kRate);
    } else {
      seg.kind = Kind::kPause;
      seg.samples = static_cast<std::size_t>(rng.uniform(0.03, 0.10) * kRate);
    }
    seg.samples = std::min(seg.samples, target - total);
    total += seg.samples;
    plan.push_back(seg);
  }

  // Intonation: slow declination plus two random sinusoidal components.
  const double p1 = rng.uniform(0.0, 2.0 * kPi), p2 = rng.uniform(0.0, 2.0 * kPi);
  const double r1 = rng.uniform(1.0, 2.5), r2 = rng.uniform(3.0, 5.0);
  const double offset = rng.uniform(-0.05, 0.05);

  Waveform w;
  w.sample_rate = kRate;
  w.samples.resize(total, 0.0f);
  std::array<Resonator, 3> vocal;
  Resonator fric;
  double phase = 0.0;
  std::array<double, 3> formants = kVowels[0].formants;
  for (auto& f : formants) f *= spk.formant_scale;
  double level = 0.0;  // smoothed voicing gate
  double noise_level = 0.0;
  std::size_t t = 0;
  const double smooth = 1.0 - std::exp(-1.0 / (0.008 * kRate));
  const double glide = 1.0 - std::exp(-1.0 / (0.025 * kRate));
  for (const auto& seg : plan) {
    std::array<double, 3> goal = formants;
    if (seg.kind == Kind::kVowel)
      for (int k = 0; k < 3; ++k) goal[k] = kVowels[seg.vowel].formants[k] * spk.formant_scale;
    const double voice_goal = seg.kind == Kind::kVowel ? 1.0 : 0.0;
    const double noise_goal = seg.kind == Kind::kFricative ? 0.35 : 0.0;
    for (std::size_t i = 0; i < seg.samples; ++i, ++t) {
      const double sec = static_cast<double>(t) / kRate;
      const double contour = offset - 0.06 * sec / std::max(1.0, total / double(kRate)) +
                             spk.f0_spread * (0.6 * std::sin(2.0 * kPi * r1 * sec + p1) +
                                              0.4 * std::sin(2.0 * kPi * r2 * sec + p2));
      const double f0 = spk.f0_hz * std::exp(contour);
      phase += f0 / kRate;
      phase -= std::floor(phase);
      for (int k = 0; k < 3; ++k) formants[k] += glide * (goal[k] - formants[k]);
      level += smooth * (voice_goal - level);
      noise_level += smooth * (noise_goal - noise_level);

      double source = 0.0;
      const int harmonics = static_cast<int>(0.45 * kRate / f0);
      for (int h = 1; h <= harmonics; ++h)
        source += std::pow(static_cast<double>(h), -spk.tilt) * std::cos(2.0 * kPi * h * phase);
      const double white = rng.uniform(-1.0, 1.0);
      double v = level * (source + spk.breathiness * 4.0 * white);
      for (int k = 0; k < 3; ++k) v = vocal[k].process(v, formants[k], kBandwidths[k] * spk.formant_scale);
      const double n = noise_level * fric.process(rng.uniform(-1.0, 1.0), seg.fric_center, 1500.0) * 4.0;
      w.samples[t] = static_cast<float>(v + n);
    }
  }
  double peak = 0.0;
  for (float s : w.samples) peak = std::max(peak, static_cast<double>(std::abs(s)));
  if (peak > 0.0)
    for (auto& s : w.samples) s = static_cast<float>(s * 0.5 / peak);
  return w;
}

std::vector<ToyUtterance> make_toy_corpus(int speakers, int per_speaker, std::uint64_t seed,
                                          double min_seconds, double max_seconds) {
  if (speakers <= 0 || per_speaker <= 0) throw ValidationError("make_toy_corpus: counts must be positive");
  std::vector<ToyUtterance> out;
  for (int s = 0; s < speakers; ++s) {
    const auto spk = toy_speaker(s, seed);
    Rng rng(seed + 7919ULL * static_cast<std::uint64_t>(s + 1));
    for (int u = 0; u < per_speaker; ++u) {
      char name[32];
      std::snprintf(name, sizeof(name), "%s_%03d", spk.id.c_str(), u);
      out.push_back({name, spk.id, synthesize_toy_utterance(spk, rng, min_seconds, max_seconds)});
    }
  }
  return out;
}

void write_toy_corpus(const std::string& dir, const std::vector<ToyUtterance>& corpus) {
  namespace fs = std::filesystem;
  for (const auto& u : corpus) {
    const fs::path d = fs::path(dir) / u.speaker_id;
    fs::create_directories(d);
    write_wav((d / (u.utt_id + ".wav")).string(), u.audio);
  }
}

}  // namespace stylevc
