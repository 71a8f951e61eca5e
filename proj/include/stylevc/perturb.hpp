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

#include <span>
#include <vector>

#include "stylevc/audio.hpp"
#include "stylevc/config.hpp"
#include "stylevc/rng.hpp"

namespace stylevc {

// Speaker-information perturbation applied before the content extractor on
// the perturbed path. All operations preserve length.

struct PeqBand {
  double center_hz = 1000.0;
  double gain_db = 0.0;
  double q = 1.0;
};

// Warps the spectral envelope along frequency by `ratio` (ratio > 1 moves
// formants up) while keeping the harmonic structure. ratio in [0.5, 2].
Waveform formant_shift(const Waveform& w, double ratio);

// Phase-vocoder pitch shift by `ratio`, same duration. ratio in [0.5, 2].
Waveform pitch_randomize(const Waveform& w, double ratio);

// Cascaded RBJ peaking biquads.
Waveform parametric_eq(const Waveform& w, std::span<const PeqBand> bands);

struct PerturbDraw {
  double formant_ratio = 1.0;
  double pitch_ratio = 1.0;
  std::vector<PeqBand> bands;
};

PerturbDraw sample_perturbation(const PerturbConfig& cfg, int sample_rate, Rng& rng);

// parametric_eq(pitch_randomize(formant_shift(w))) with parameters drawn
// from cfg using rng.
Waveform perturb(const Waveform& w, const PerturbConfig& cfg, Rng& rng);

Waveform apply_perturbation(const Waveform& w, const PerturbDraw& draw);

}  // namespace stylevc
