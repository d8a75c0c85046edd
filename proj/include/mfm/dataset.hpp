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
#include <map>
#include <string>
#include <vector>

#include "mfm/tensor.hpp"
#include "mfm/world.hpp"

namespace mfm {

enum class Split { kTrain, kTest };
std::string_view to_string(Split split);

struct DatasetManifest {
  int format_version = 1;
  WorldConfig world;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  bool test_single_event = true;
  std::map<std::string, std::string> checksums;  // file name -> FNV-1a hex

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

// One split held as stacked tensors: fast N x T1 x D1, slow N x W x D2,
// target N x W x Dc.
struct SplitData {
  Tensor fast;
  Tensor slow;
  Tensor target;
  std::vector<EventScript> scripts;

  std::size_t size() const { return scripts.size(); }
};

struct Dataset {
  DatasetManifest manifest;
  WorldPrototypes prototypes;
  SplitData train;
  SplitData test;

  const WorldConfig& world() const { return manifest.world; }
  const SplitData& split(Split s) const { return s == Split::kTrain ? train : test; }
};

// Builds both splits in memory. Sample i of a split draws from its own
// stream seeded by hash(seed, split, i), so the bytes never depend on
// generation order. Test samples carry a single event.
Dataset synthesize_dataset(const WorldConfig& cfg, std::size_t n_train, std::size_t n_test,
                           bool test_single_event = true);

// Writes manifest.json, prototypes.mfmt, {train,test}_{v1,v2,c}.mfmt and
// {train,test}_events.json under out_dir.
DatasetManifest generate_dataset(const WorldConfig& cfg, std::size_t n_train, std::size_t n_test,
                                 const std::filesystem::path& out_dir);
void write_dataset(Dataset& dataset, const std::filesystem::path& out_dir);

// Loads and validates a dataset directory; every checksum must match.
Dataset load_dataset(const std::filesystem::path& dir);

// Order of tensors inside prototypes.mfmt.
inline constexpr const char* kPrototypeOrder[] = {"audio", "baseline", "semantic", "class_leak", "onset"};

}  // namespace mfm
