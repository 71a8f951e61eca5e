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
#include <string>
#include <vector>

#include "stylevc/audio.hpp"
#include "stylevc/rng.hpp"

namespace stylevc {

// Voice parameters of one synthetic source-filter speaker.
struct ToySpeaker {
  std::string id;
  double f0_hz = 120.0;         // median fundamental
  double f0_spread = 0.15;      // relative excursion of the intonation contour
  double formant_scale = 1.0;   // multiplies every vowel formant
  double tilt = 1.5;            // harmonic amplitude ~ k^-tilt
  double breathiness = 0.02;    // aspiration noise relative to voicing
  double tempo = 1.0;           // segment-duration multiplier
};

// Speakers 0..4 come from a fixed table; higher indices are drawn from a
// generator seeded with `seed` and the index.
ToySpeaker toy_speaker(int index, std::uint64_t seed = 7);

// Vowels, fricatives and pauses rendered at 16 kHz, peak-normalized to 0.5.
Waveform synthesize_toy_utterance(const ToySpeaker& speaker, Rng& rng, double min_seconds,
                                  double max_seconds);

struct ToyUtterance {
  std::string utt_id;
  std::string speaker_id;
  Waveform audio;
};

std::vector<ToyUtterance> make_toy_corpus(int speakers, int utterances_per_speaker, std::uint64_t seed,
                                          double min_seconds = 1.5, double max_seconds = 2.5);

// Writes <dir>/<speaker_id>/<utt_id>.wav for every utterance.
void write_toy_corpus(const std::string& dir, const std::vector<ToyUtterance>& corpus);

}  // namespace stylevc
