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
#include <string>
#include <vector>

#include "mfm/dataset.hpp"
#include "mfm/metrics.hpp"
#include "mfm/trainer.hpp"

namespace mfm {

enum class AblationSuite { kEncoders, kFusion, kMapper };
std::string_view to_string(AblationSuite s);
// Accepts "encoders" | "fusion" | "mapper".
AblationSuite parse_suite(std::string_view name);

struct AblationVariant {
  std::string name;
  MapperKind kind;
  FusionMode fusion;
};

// encoders: channel_proj, cavp_only, timechat_only
// fusion:   channel_proj, add, time_cat
// mapper:   ar, diff (both channel_proj)
std::vector<AblationVariant> suite_variants(AblationSuite suite);

struct AblationOptions {
  std::vector<std::uint64_t> seeds{17, 18, 19};
  TrainConfig train;
  // Zero keeps the preset value.
  int d_model = 0;
  int n_layers = 0;
  int n_heads = 0;
  // Leading test samples for the final evaluation; 0 = all.
  std::size_t eval_subset = 0;
  int threads = 1;
  std::filesystem::path out_dir;  // empty: nothing written
};

struct AblationRow {
  std::string variant;
  std::string seed;  // decimal seed, or "mean"
  EvalReport report;
  double final_train_mse = 0.0;
};

struct AblationCurvePoint {
  std::string variant;
  std::uint64_t seed = 0;
  EpochLog epoch;
};

struct AblationResult {
  AblationSuite suite = AblationSuite::kEncoders;
  std::vector<AblationRow> rows;  // variants x seeds, then one mean row per variant
  std::vector<AblationCurvePoint> curves;
};

MapperConfig ablation_mapper_config(const Dataset& data, const AblationOptions& opts, FusionMode fusion);

// Trains and evaluates every (variant, seed). Jobs may run on up to
// opts.threads workers; each job owns its rng streams so the output does not
// depend on the thread count. With out_dir set, writes ablation.csv,
// curves.csv and one run directory per job.
AblationResult run_ablation(AblationSuite suite, const Dataset& data, const AblationOptions& opts);

std::string ablation_csv(const AblationResult& r);
std::string curves_csv(const AblationResult& r);

}  // namespace mfm
