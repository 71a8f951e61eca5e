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

#include "stylevc/trainer.hpp"

namespace stylevc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: magic "SVCKPT\0\0", u32 version, u64 payload size, u32
// CRC-32 of the payload, payload. The payload holds the config, counters,
// rng state, every parameter and buffer, and both optimizers' moments.
// Writes go to a temporary file that is renamed into place.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

// Serialized bytes of a state, as written to disk.
std::string checkpoint_bytes(const TrainState& state);
TrainState checkpoint_from_bytes(const std::string& bytes);

}  // namespace stylevc
