// Copyright 2026 The MFM Mapper Authors. All Rights Reserved.
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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mfm {

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

struct OptimizerSnapshot {
  std::uint64_t step = 0;
  std::vector<NamedTensor> first_moment;
  std::vector<NamedTensor> second_moment;

  bool operator==(const OptimizerSnapshot&) const = default;
};

// Everything a training run needs to continue bit-exactly.
struct Checkpoint {
  nlohmann::json model_config;
  std::vector<NamedTensor> params;
  std::optional<OptimizerSnapshot> optimizer;
  std::string rng_state;
  int epoch = 0;
  // Free-form metadata (loss history, train config snapshot).
  nlohmann::json extra = nlohmann::json::object();
};

// CheckpointFile layout: "MFMC" | u32 LE header_len | JSON header |
// concatenated f32 LE payload. Header tensor entries carry byte offsets
// relative to the payload start.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mfm
