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
#include <random>
#include <string>

#include <torch/torch.h>

namespace stylevc {

// Single source of randomness for data sampling, perturbation draws,
// reparameterization noise and unconditional-generation coin flips. The
// whole state is a 64-bit Mersenne Twister, so checkpointing it makes
// training resumable bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double log_uniform(double lo, double hi);
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  std::int64_t index(std::int64_t n);

  // Standard-normal tensor drawn from a generator seeded off this stream.
  torch::Tensor normal(at::IntArrayRef shape,
                       torch::ScalarType dtype = torch::kFloat32);

  // Derive an independent stream (for per-item work).
  Rng split() { return Rng(engine_()); }

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stylevc
