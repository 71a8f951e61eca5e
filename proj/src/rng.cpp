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

#include "stylevc/rng.hpp"

#include <cmath>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>

#include "stylevc/errors.hpp"

namespace stylevc {

double Rng::log_uniform(double lo, double hi) {
  return std::exp(uniform(std::log(lo), std::log(hi)));
}

std::int64_t Rng::index(std::int64_t n) {
  STYLEVC_CHECK(n > 0, "Rng::index needs n > 0");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t v;
  do v = engine_();
  while (v >= limit);
  return static_cast<std::int64_t>(v % un);
}

torch::Tensor Rng::normal(at::IntArrayRef shape, torch::ScalarType dtype) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(engine_());
  return torch::randn(shape, gen, torch::TensorOptions().dtype(dtype));
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

Rng Rng::deserialize(const std::string& state) {
  Rng r;
  std::istringstream is(state);
  is >> r.engine_;
  if (is.fail()) throw ValidationError("corrupt rng state");
  return r;
}

}  // namespace stylevc
