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


#include "mfm/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "mfm/errors.hpp"

namespace mfm {

std::string_view to_string(AblationSuite s) {
  switch (s) {
    case AblationSuite::kEncoders:
      return "encoders";
    case AblationSuite::kFusion:
      return "fusion";
    case AblationSuite::kMapper:
      return "mapper";
  }
  return "?";
}

AblationSuite parse_suite(std::string_view name) {
  if (name == "encoders") return AblationSuite::kEncoders;
  if (name == "fusion") return AblationSuite::kFusion;
  if (name == "mapper") return AblationSuite::kMapper;
  throw ConfigError("unknown ablation suite '" + std::string(name) + "' (expected encoders|fusion|mapper)");
}

std::vector<AblationVariant> suite_variants(AblationSuite suite) {
  using enum FusionMode;
  switch (suite) {
    case AblationSuite::kEncoders:
      return {{"channel_proj", MapperKind::kAutoregressive, kChannelProj},
              {"cavp_only", MapperKind::kAutoregressive, kFastOnly},
              {"timechat_only", MapperKind::kAutoregressive, kSlowOnly}};
    case AblationSuite::kFusion:
      return {{"channel_proj", MapperKind::kAutoregressive, kChannelProj},
              {"add", MapperKind::kAutoregressive, kAdd},
              {"time_cat", MapperKind::kAutoregressive, kTimeCat}};
    case AblationSuite::kMapper:
      return {{"ar", MapperKind::kAutoregressive, kChannelProj}, {"diff", MapperKind::kDiffusion, kChannelProj}};
  }
  return {};
}

MapperConfig ablation_mapper_config(const Dataset& data, const AblationOptions& opts, FusionMode fusion) {
  MapperConfig m = MapperConfig::for_world(data.world(), opts.train.preset, fusion);
  if (opts.d_model > 0) m.d_model = opts.d_model;
  if (opts.n_layers > 0) m.n_layers = opts.n_layers;
  if (opts.n_heads > 0) m.n_heads = opts.n_heads;
  m.validate();
  return m;
}

AblationResult run_ablation(AblationSuite suite, const Dataset& data, const AblationOptions& opts) {
  if (opts.seeds.empty()) throw ConfigError("ablation: seed list is empty");
  opts.train.validate();
  const auto variants = suite_variants(suite);
  struct Job {
    const AblationVariant* variant;
    std::uint64_t seed;
    AblationRow row;
    std::vector<EpochLog> log;
  };
  std::vector<Job> jobs;
  for (const auto& v : variants) {
    for (std::uint64_t s : opts.seeds) jobs.push_back({&v, s, {}, {}});
  }
  // Validate every config before any training starts.
  for (const auto& v : variants) ablation_mapper_config(data, opts, v.fusion);

  auto run_job = [&](Job& job) {
    TrainConfig cfg = opts.train;
    cfg.seed = job.seed;
    TrainOptions topts;
    if (!opts.out_dir.empty()) {
      topts.out_dir = opts.out_dir / "runs" / (job.variant->name + "_s" + std::to_string(job.seed));
    }
    const MapperConfig mcfg = ablation_mapper_config(data, opts, job.variant->fusion);
    TrainResult tr = train_model(job.variant->kind, data, mcfg, cfg, topts);
    EvalOptions eo{opts.eval_subset, 64, cfg.diff_sample_steps, mix_seed({cfg.seed, 0xe7a1ULL}), cfg.diff_steps};
    const MatrixF pred = predict(tr.model, data.test, eo);
    const std::size_t n = static_cast<std::size_t>(pred.rows() / mcfg.target_len);
    if (n == data.test.size()) {
      job.row.report = evaluate_predictions(pred, data);
    } else {
      // Metrics over the evaluated prefix of the test split.
      Dataset view;
      view.manifest = data.manifest;
      view.prototypes = data.prototypes;
      const auto& td = data.test.target.dims;
      view.test.target = Tensor({static_cast<std::uint32_t>(n), td[1], td[2]});
      for (std::size_t i = 0; i < n; ++i) view.test.target.set_item(i, data.test.target.item(i));
      view.test.scripts.assign(data.test.scripts.begin(), data.test.scripts.begin() + static_cast<std::ptrdiff_t>(n));
      job.row.report = evaluate_predictions(pred, view);
    }
    job.row.report.seeds = {job.seed};
    job.row.variant = job.variant->name;
    job.row.seed = std::to_string(job.seed);
    job.row.final_train_mse = tr.log.back().train_mse;
    job.log = std::move(tr.log);
  };

  const int workers = std::max(1, std::min<int>(opts.threads, static_cast<int>(jobs.size())));
  if (workers == 1) {
    for (auto& j : jobs) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            run_job(jobs[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  AblationResult out;
  out.suite = suite;
  for (const auto& j : jobs) {
    out.rows.push_back(j.row);
    for (const auto& e : j.log) out.curves.push_back({j.variant->name, j.seed, e});
  }
  for (const auto& v : variants) {
    AblationRow mean;
    mean.variant = v.name;
    mean.seed = "mean";
    double k = 0.0;
    for (const auto& j : jobs) {
      if (j.variant != &v) continue;
      const EvalReport& r = j.row.report;
      mean.report.n_samples = r.n_samples;
      mean.report.mse += r.mse;
      mean.report.fd += r.fd;
      mean.report.kl += r.kl;
      mean.report.is_score += r.is_score;
      mean.report.alignment += r.alignment;
      mean.report.desync_s += r.desync_s;
      mean.report.seeds.push_back(j.seed);
      mean.report.config_hash = r.config_hash;
      mean.final_train_mse += j.row.final_train_mse;
      k += 1.0;
    }
    mean.report.mse /= k;
    mean.report.fd /= k;
    mean.report.kl /= k;
    mean.report.is_score /= k;
    mean.report.alignment /= k;
    mean.report.desync_s /= k;
    mean.final_train_mse /= k;
    out.rows.push_back(mean);
  }

  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    write_file_atomic(opts.out_dir / "ablation.csv", ablation_csv(out));
    write_file_atomic(opts.out_dir / "curves.csv", curves_csv(out));
  }
  return out;
}

std::string ablation_csv(const AblationResult& r) {
  std::ostringstream os;
  os << "suite,variant,seed,final_train_mse," << report_csv_header() << '\n';
  for (const auto& row : r.rows) {
    os << to_string(r.suite) << ',' << row.variant << ',' << row.seed << ',' << std::setprecision(9)
       << row.final_train_mse << ',' << report_csv_row(row.report) << '\n';
  }
  return os.str();
}

std::string curves_csv(const AblationResult& r) {
  std::ostringstream os;
  os << "suite,variant,seed,epoch,train_mse,test_mse\n" << std::setprecision(9);
  for (const auto& c : r.curves) {
    os << to_string(r.suite) << ',' << c.variant << ',' << c.seed << ',' << c.epoch.epoch << ',' << c.epoch.train_mse
       << ',';
    if (std::isnan(c.epoch.test_mse)) {
      os << "nan";
    } else {
      os << c.epoch.test_mse;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace mfm
