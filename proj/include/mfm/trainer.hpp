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
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfm/ar_mapper.hpp"
#include "mfm/dataset.hpp"
#include "mfm/diff_mapper.hpp"
#include "mfm/optim.hpp"

namespace mfm {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 40;
  int batch_size = 48;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 17;
  Preset preset = Preset::kDesk;
  int checkpoint_every = 10;  // epochs; 0 disables intermediate checkpoints
  int eval_every = 1;         // epochs; the last epoch is always evaluated
  std::size_t eval_subset = 0;  // leading test samples used for test_mse; 0 = all
  int diff_steps = 1000;
  int diff_sample_steps = 100;

  AdamWConfig adamw() const { return {lr, adam_beta1, adam_beta2, adam_eps, weight_decay}; }
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Either mapper kind, float parameters.
struct Model {
  MapperKind kind = MapperKind::kAutoregressive;
  MapperParams<float> ar;
  DiffMapperParams<float> diff;
  int diff_steps = 1000;  // schedule length the diffusion mapper was trained on
  // The diffusion mapper works on (c - target_shift) / target_scale, so the
  // data it noises has unit variance. Identity for AR models.
  Eigen::RowVectorXf target_shift;
  float target_scale = 1.0f;

  const MapperConfig& config() const { return kind == MapperKind::kAutoregressive ? ar.cfg : diff.cfg; }
};

Model init_model(MapperKind kind, const MapperConfig& cfg, std::uint64_t seed);
nlohmann::json model_config_json(const Model& model);
std::vector<NamedTensor> model_tensors(const Model& model);
// Rebuilds a model from checkpoint header + tensors. ConfigError on mismatch.
Model model_from_checkpoint(const Checkpoint& ckpt);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

struct EvalOptions {
  std::size_t subset = 0;  // 0 = whole split
  int batch_size = 64;
  int diff_sample_steps = 100;
  std::uint64_t noise_seed = 0x5eed;
  int diff_steps = 0;  // 0 = the model's own schedule length
};

// Predictions for the first n samples of a split (all when n = 0), stacked
// (n*T_c) x Dc. AR decodes greedily; diff samples with fixed eval noise.
MatrixF predict(const Model& model, const SplitData& split, const EvalOptions& opts = {});

// Sequence MSE of predict() against the split targets.
double evaluate_loss(const Model& model, const SplitData& split, const EvalOptions& opts = {});

// Per-position training-set mean target, T_c x Dc.
MatrixF mean_target(const SplitData& train);
// MSE on the test split of predicting mean_target(train) for every sample.
double mean_predictor_mse(const Dataset& dataset);

// The state training starts from: init_model, plus for AR a head bias set
// to the mean training target so the untrained model predicts the mean, and
// for diffusion the target normalization fitted on the training split.
Model initial_model(MapperKind kind, const Dataset& data, const MapperConfig& mcfg, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;  // NaN when the epoch was not evaluated

  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  double max_clipped_norm = 0.0;  // largest global grad norm after clipping
};

struct TrainOptions {
  std::filesystem::path out_dir;                 // empty: no files written
  std::optional<std::filesystem::path> resume;   // checkpoint to continue from
  std::function<void(const EpochLog&)> on_epoch;  // progress hook
};

// Runs epochs x ceil(N / batch) AdamW steps. With out_dir set, writes
// config.json, loss_log.csv, ckpt_epoch_{N}.mfmc at the checkpoint cadence
// and final.mfmc. On divergence throws NumericError; checkpoints already
// written stay in place.
TrainResult train_model(MapperKind kind, const Dataset& data, const MapperConfig& mcfg, const TrainConfig& cfg,
                        const TrainOptions& opts = {});

// Convenience entry: loads the dataset and builds the mapper config from
// the preset and fusion mode.
std::filesystem::path train(MapperKind kind, const std::filesystem::path& dataset_dir, FusionMode fusion,
                            const TrainConfig& cfg, const std::filesystem::path& out_dir);

std::string loss_log_csv(const std::vector<EpochLog>& log);

}  // namespace mfm
