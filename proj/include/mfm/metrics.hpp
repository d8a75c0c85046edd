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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mfm/dataset.hpp"
#include "mfm/tensor.hpp"
#include "mfm/world.hpp"

namespace mfm {

// Fréchet distance between Gaussian fits of two sample sets (rows are
// samples). Covariances get 1e-6 I shrinkage.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// (N*T) x D stacked sequences -> N x D means.
Eigen::MatrixXd mean_pool(const MatrixF& stacked, int seq_len);

// Softmax regression referee on mean-pooled target sequences.
struct ProbeParams {
  Eigen::MatrixXd weight;  // Dc x K
  Eigen::RowVectorXd bias;  // 1 x K

  int num_classes() const { return static_cast<int>(weight.cols()); }
};

struct ProbeOptions {
  int iterations = 500;
  double lr = 0.1;
};

// Full-batch gradient descent from zero weights. Throws ConfigError if any
// class in [0, K) has no sample.
ProbeParams train_probe(const Eigen::MatrixXd& pooled, std::span<const int> labels, int num_classes,
                        const ProbeOptions& opts = {});
ProbeParams train_probe(const MatrixF& stacked, int seq_len, std::span<const int> labels, int num_classes,
                        const ProbeOptions& opts = {});

// N x K class posteriors.
Eigen::MatrixXd probe_posteriors(const ProbeParams& probe, const Eigen::MatrixXd& pooled);
double probe_accuracy(const ProbeParams& probe, const Eigen::MatrixXd& pooled, std::span<const int> labels);

// Mean over rows of KL(p_true || p_pred); both floored at 1e-8.
double kl_from_posteriors(const Eigen::MatrixXd& p_true, const Eigen::MatrixXd& p_pred);
// exp(mean_x KL(p(y|x) || p(y))).
double is_from_posteriors(const Eigen::MatrixXd& p);

double kl_metric(const ProbeParams& probe, const MatrixF& c_true, const MatrixF& c_pred, int seq_len);
double is_metric(const ProbeParams& probe, const MatrixF& c_pred, int seq_len);

// Mean over samples of max_w cos(pred[w], q_class).
double alignment_score(const MatrixF& c_pred, int seq_len, std::span<const int> class_ids,
                       const MatrixF& audio_prototypes);

// Predicted event window per sample: argmax_w <pred[w], q_class>, ties to
// the lowest index.
std::vector<int> decode_event_windows(const MatrixF& c_pred, int seq_len, std::span<const int> class_ids,
                                      const MatrixF& audio_prototypes);

// Mean |w_hat - w_true| in seconds over single-event scripts.
double desync_metric(const MatrixF& c_pred, int seq_len, const std::vector<EventScript>& scripts,
                     const WorldConfig& world, const MatrixF& audio_prototypes);

// Class id of each single-event script; ArgumentError otherwise.
std::vector<int> single_event_classes(const std::vector<EventScript>& scripts);

struct EvalReport {
  std::size_t n_samples = 0;
  double mse = 0.0;
  double fd = 0.0;
  double kl = 0.0;
  double is_score = 0.0;
  double alignment = 0.0;
  double desync_s = 0.0;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;

  bool operator==(const EvalReport&) const = default;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);

// All metrics for test-split predictions ((N*W) x Dc stacked). The probe
// is trained on the test-split ground truth.
EvalReport evaluate_predictions(const MatrixF& c_pred, const Dataset& dataset);

// Reads an N x W x Dc prediction tensor, evaluates it against the dataset's
// test split and writes report.json and report.csv into out_dir.
EvalReport evaluate(const std::filesystem::path& pred_file, const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& out_dir);

}  // namespace mfm
