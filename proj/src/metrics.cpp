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


#include "mfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mfm/errors.hpp"

namespace mfm {
namespace {

constexpr double kProbFloor = 1e-8;

void check_stacked(const MatrixF& m, int seq_len, const char* what) {
  if (seq_len < 1 || m.rows() == 0 || m.rows() % seq_len != 0) {
    throw ArgumentError(std::string(what) + ": rows must be a positive multiple of the sequence length");
  }
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() == 0 || a.cols() != b.cols()) throw ArgumentError("frechet_distance: need equal, nonzero widths");
  if (a.rows() < 2 || b.rows() < 2) throw ArgumentError("frechet_distance: need at least 2 samples per set");
  const Eigen::Index d = a.cols();
  auto fit = [d](const Eigen::MatrixXd& x, Eigen::RowVectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - mu;
    cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
    cov += 1e-6 * Eigen::MatrixXd::Identity(d, d);
  };
  Eigen::RowVectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  fit(a, mu_a, cov_a);
  fit(b, mu_b, cov_b);

  // tr (S_a S_b)^{1/2} = tr (S_a^{1/2} S_b S_a^{1/2})^{1/2}; the inner product
  // is symmetric PSD so a symmetric eigensolver applies.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a);
  const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
}

Eigen::MatrixXd mean_pool(const MatrixF& stacked, int seq_len) {
  check_stacked(stacked, seq_len, "mean_pool");
  const Eigen::Index n = stacked.rows() / seq_len;
  Eigen::MatrixXd out(n, stacked.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = stacked.middleRows(i * seq_len, seq_len).cast<double>().colwise().mean();
  }
  return out;
}

ProbeParams train_probe(const Eigen::MatrixXd& x, std::span<const int> labels, int num_classes,
                        const ProbeOptions& opts) {
  const Eigen::Index n = x.rows();
  if (num_classes < 2) throw ConfigError("probe: need at least 2 classes");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ArgumentError("probe: one label per sample required");
  if (n < num_classes) throw ConfigError("probe: fewer samples than classes");
  std::vector<int> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ArgumentError("probe: label out of range");
    ++counts[y];
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) throw ConfigError("probe: class " + std::to_string(k) + " has no samples");
  }
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[i]) = 1.0;

  // Fit on per-feature standardized inputs, then fold the scaling back
  // into the weights so the probe applies to raw pooled vectors.
  const Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::RowVectorXd sd = ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (sd(j) < 1e-12) sd(j) = 1.0;
  }
  const Eigen::MatrixXd z = (x.rowwise() - mu).array().rowwise() / sd.array();

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(x.cols(), num_classes);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(num_classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int it = 0; it < opts.iterations; ++it) {
    Eigen::MatrixXd logits = z * w;
    logits.rowwise() += b;
    const Eigen::MatrixXd err = (softmax_rows(logits) - onehot) * inv_n;
    w -= opts.lr * (z.transpose() * err);
    b -= opts.lr * err.colwise().sum();
  }
  ProbeParams p;
  p.weight = w.array().colwise() / sd.transpose().array();
  p.bias = b - mu * p.weight;
  return p;
}

ProbeParams train_probe(const MatrixF& stacked, int seq_len, std::span<const int> labels, int num_classes,
                        const ProbeOptions& opts) {
  return train_probe(mean_pool(stacked, seq_len), labels, num_classes, opts);
}

Eigen::MatrixXd probe_posteriors(const ProbeParams& probe, const Eigen::MatrixXd& pooled) {
  if (pooled.cols() != probe.weight.rows()) throw ArgumentError("probe: feature width mismatch");
  Eigen::MatrixXd logits = pooled * probe.weight;
  logits.rowwise() += probe.bias;
  return softmax_rows(logits);
}

double probe_accuracy(const ProbeParams& probe, const Eigen::MatrixXd& pooled, std::span<const int> labels) {
  const Eigen::MatrixXd p = probe_posteriors(probe, pooled);
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index k;
    p.row(i).maxCoeff(&k);
    hit += static_cast<int>(k) == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(p.rows());
}

double kl_from_posteriors(const Eigen::MatrixXd& p_true, const Eigen::MatrixXd& p_pred) {
  if (p_true.rows() != p_pred.rows() || p_true.cols() != p_pred.cols()) {
    throw ArgumentError("kl: posterior sets differ in size");
  }
  if (p_true.rows() == 0) throw ArgumentError("kl: empty set");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p_true.rows(); ++i) {
    for (Eigen::Index k = 0; k < p_true.cols(); ++k) {
      const double a = std::max(p_true(i, k), kProbFloor);
      const double b = std::max(p_pred(i, k), kProbFloor);
      total += a * std::log(a / b);
    }
  }
  return total / static_cast<double>(p_true.rows());
}

double is_from_posteriors(const Eigen::MatrixXd& p) {
  if (p.rows() == 0) throw ArgumentError("is: empty set");
  const Eigen::RowVectorXd marginal = p.colwise().mean();
  Eigen::MatrixXd m(p.rows(), p.cols());
  m.rowwise() = marginal;
  return std::exp(kl_from_posteriors(p, m));
}

double kl_metric(const ProbeParams& probe, const MatrixF& c_true, const MatrixF& c_pred, int seq_len) {
  if (c_true.rows() != c_pred.rows() || c_true.cols() != c_pred.cols()) {
    throw ArgumentError("kl: true and predicted sets differ in size");
  }
  return kl_from_posteriors(probe_posteriors(probe, mean_pool(c_true, seq_len)),
                            probe_posteriors(probe, mean_pool(c_pred, seq_len)));
}

double is_metric(const ProbeParams& probe, const MatrixF& c_pred, int seq_len) {
  return is_from_posteriors(probe_posteriors(probe, mean_pool(c_pred, seq_len)));
}

double alignment_score(const MatrixF& c_pred, int seq_len, std::span<const int> class_ids,
                       const MatrixF& audio_prototypes) {
  check_stacked(c_pred, seq_len, "alignment");
  const Eigen::Index n = c_pred.rows() / seq_len;
  if (static_cast<Eigen::Index>(class_ids.size()) != n) throw ArgumentError("alignment: one class id per sample");
  if (audio_prototypes.cols() != c_pred.cols()) throw ArgumentError("alignment: prototype width mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = class_ids[i];
    if (k < 0 || k >= audio_prototypes.rows()) throw ArgumentError("alignment: unknown class id " + std::to_string(k));
    const Eigen::RowVectorXd q = audio_prototypes.row(k).cast<double>();
    const double qn = q.norm();
    double best = -std::numeric_limits<double>::infinity();
    for (int w = 0; w < seq_len; ++w) {
      const Eigen::RowVectorXd c = c_pred.row(i * seq_len + w).cast<double>();
      const double denom = c.norm() * qn;
      const double cosv = denom < 1e-12 ? 0.0 : c.dot(q) / denom;
      best = std::max(best, cosv);
    }
    total += best;
  }
  return total / static_cast<double>(n);
}

std::vector<int> decode_event_windows(const MatrixF& c_pred, int seq_len, std::span<const int> class_ids,
                                      const MatrixF& audio_prototypes) {
  check_stacked(c_pred, seq_len, "desync");
  const Eigen::Index n = c_pred.rows() / seq_len;
  if (static_cast<Eigen::Index>(class_ids.size()) != n) throw ArgumentError("desync: one class id per sample");
  if (audio_prototypes.cols() != c_pred.cols()) throw ArgumentError("desync: prototype width mismatch");
  std::vector<int> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = class_ids[i];
    if (k < 0 || k >= audio_prototypes.rows()) throw ArgumentError("desync: unknown class id " + std::to_string(k));
    const Eigen::RowVectorXd q = audio_prototypes.row(k).cast<double>();
    int best_w = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int w = 0; w < seq_len; ++w) {
      const double s = c_pred.row(i * seq_len + w).cast<double>().dot(q);
      if (s > best) {
        best = s;
        best_w = w;
      }
    }
    out[i] = best_w;
  }
  return out;
}

std::vector<int> single_event_classes(const std::vector<EventScript>& scripts) {
  std::vector<int> ids;
  ids.reserve(scripts.size());
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    if (scripts[i].events.size() != 1) {
      throw ArgumentError("sample " + std::to_string(i) + " has " + std::to_string(scripts[i].events.size()) +
                          " events; evaluation needs single-event scripts");
    }
    ids.push_back(scripts[i].events[0].class_id);
  }
  return ids;
}

double desync_metric(const MatrixF& c_pred, int seq_len, const std::vector<EventScript>& scripts,
                     const WorldConfig& world, const MatrixF& audio_prototypes) {
  const std::vector<int> ids = single_event_classes(scripts);
  const std::vector<int> w_hat = decode_event_windows(c_pred, seq_len, ids, audio_prototypes);
  double total = 0.0;
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    total += std::abs(w_hat[i] - onset_window(world, scripts[i].events[0].onset_s));
  }
  return total * world.window_seconds() / static_cast<double>(scripts.size());
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"n_samples", r.n_samples}, {"mse", r.mse},
                     {"fd", r.fd},               {"kl", r.kl},
                     {"is_score", r.is_score},   {"alignment", r.alignment},
                     {"desync_s", r.desync_s},   {"seeds", r.seeds},
                     {"config_hash", r.config_hash}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  j.at("n_samples").get_to(r.n_samples);
  j.at("mse").get_to(r.mse);
  j.at("fd").get_to(r.fd);
  j.at("kl").get_to(r.kl);
  j.at("is_score").get_to(r.is_score);
  j.at("alignment").get_to(r.alignment);
  j.at("desync_s").get_to(r.desync_s);
  j.at("seeds").get_to(r.seeds);
  j.at("config_hash").get_to(r.config_hash);
}

std::string report_csv_header() { return "n_samples,mse,fd,kl,is_score,alignment,desync_s,config_hash"; }

std::string report_csv_row(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(9) << r.n_samples << ',' << r.mse << ',' << r.fd << ',' << r.kl << ',' << r.is_score << ','
     << r.alignment << ',' << r.desync_s << ',' << r.config_hash;
  return os.str();
}

EvalReport evaluate_predictions(const MatrixF& c_pred, const Dataset& dataset) {
  const SplitData& test = dataset.test;
  const auto& td = test.target.dims;
  const int seq_len = static_cast<int>(td[1]);
  const std::size_t n = test.size();
  if (c_pred.rows() != static_cast<Eigen::Index>(n * td[1]) || c_pred.cols() != static_cast<Eigen::Index>(td[2])) {
    throw FormatError("prediction dims do not match the test split (" + std::to_string(n) + " x " +
                      std::to_string(td[1]) + " x " + std::to_string(td[2]) + ")");
  }
  MatrixF c_true(c_pred.rows(), c_pred.cols());
  for (std::size_t i = 0; i < n; ++i) c_true.middleRows(static_cast<Eigen::Index>(i) * seq_len, seq_len) = test.target.item(i);

  const std::vector<int> ids = single_event_classes(test.scripts);
  const Eigen::MatrixXd pooled_true = mean_pool(c_true, seq_len);
  const Eigen::MatrixXd pooled_pred = mean_pool(c_pred, seq_len);
  const ProbeParams probe = train_probe(pooled_true, ids, dataset.world().num_classes);

  EvalReport r;
  r.n_samples = n;
  r.mse = (c_true.cast<double>() - c_pred.cast<double>()).squaredNorm() / static_cast<double>(n * seq_len);
  r.fd = frechet_distance(pooled_true, pooled_pred);
  r.kl = kl_from_posteriors(probe_posteriors(probe, pooled_true), probe_posteriors(probe, pooled_pred));
  r.is_score = is_from_posteriors(probe_posteriors(probe, pooled_pred));
  r.alignment = alignment_score(c_pred, seq_len, ids, dataset.prototypes.audio);
  r.desync_s = desync_metric(c_pred, seq_len, test.scripts, dataset.world(), dataset.prototypes.audio);
  r.seeds = {dataset.world().seed};
  r.config_hash = checksum_hex(dataset.manifest.to_json().dump());
  return r;
}

EvalReport evaluate(const std::filesystem::path& pred_file, const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& out_dir) {
  const Dataset data = load_dataset(dataset_dir);
  const Tensor pred = read_tensor(pred_file);
  const auto& td = data.test.target.dims;
  if (pred.dims.size() != 3 || pred.dims[0] != data.test.size() || pred.dims[1] != td[1] || pred.dims[2] != td[2]) {
    throw FormatError(pred_file.string() + ": prediction dims do not match the test split");
  }
  const MatrixF stacked = Eigen::Map<const MatrixF>(pred.values.data(), static_cast<Eigen::Index>(pred.dims[0] * pred.dims[1]),
                                                    static_cast<Eigen::Index>(pred.dims[2]));
  EvalReport r = evaluate_predictions(stacked, data);
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "report.json", nlohmann::json(r).dump(2) + "\n");
  write_file_atomic(out_dir / "report.csv", report_csv_header() + "\n" + report_csv_row(r) + "\n");
  return r;
}

}  // namespace mfm
