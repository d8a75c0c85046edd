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


#include "mfm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <type_traits>

#include "mfm/checkpoint.hpp"
#include "mfm/errors.hpp"
#include "mfm/rng.hpp"

namespace mfm {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("train config field '" + field + "': " + why);
  };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be > 0");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps", "must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (!(grad_clip_norm >= 0.0)) fail("grad_clip_norm", "must be >= 0");
  if (checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");
  if (eval_every < 1) fail("eval_every", "must be >= 1");
  if (diff_steps < 1) fail("diff_steps", "must be >= 1");
  if (diff_sample_steps < 1 || diff_sample_steps > diff_steps) fail("diff_sample_steps", "need 1 <= n <= diff_steps");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"weight_decay", c.weight_decay},
                     {"grad_clip_norm", c.grad_clip_norm},
                     {"seed", c.seed},
                     {"preset", std::string(to_string(c.preset))},
                     {"checkpoint_every", c.checkpoint_every},
                     {"eval_every", c.eval_every},
                     {"eval_subset", c.eval_subset},
                     {"diff_steps", c.diff_steps},
                     {"diff_sample_steps", c.diff_sample_steps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("lr").get_to(c.lr);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("grad_clip_norm").get_to(c.grad_clip_norm);
  j.at("seed").get_to(c.seed);
  c.preset = parse_preset(j.at("preset").get<std::string>());
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("eval_every").get_to(c.eval_every);
  j.at("eval_subset").get_to(c.eval_subset);
  j.at("diff_steps").get_to(c.diff_steps);
  j.at("diff_sample_steps").get_to(c.diff_sample_steps);
}

Model init_model(MapperKind kind, const MapperConfig& cfg, std::uint64_t seed) {
  Model m;
  m.kind = kind;
  if (kind == MapperKind::kAutoregressive) {
    m.ar = init_mapper<float>(cfg, seed);
  } else {
    m.diff = init_diff_mapper<float>(cfg, seed);
    m.target_shift = Eigen::RowVectorXf::Zero(cfg.target_dim);
  }
  return m;
}

nlohmann::json model_config_json(const Model& model) {
  nlohmann::json j = {{"kind", std::string(to_string(model.kind))}, {"mapper", model.config()}};
  if (model.kind == MapperKind::kDiffusion) {
    j["diff_steps"] = model.diff_steps;
    j["target_shift"] = std::vector<float>(model.target_shift.data(),
                                           model.target_shift.data() + model.target_shift.size());
    j["target_scale"] = model.target_scale;
  }
  return j;
}

std::vector<NamedTensor> model_tensors(const Model& model) {
  return model.kind == MapperKind::kAutoregressive ? to_named_tensors(model.ar) : to_named_tensors(model.diff);
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  MapperKind kind;
  MapperConfig cfg;
  int diff_steps = 1000;
  std::vector<float> shift;
  float scale = 1.0f;
  try {
    kind = parse_mapper_kind(ckpt.model_config.at("kind").get<std::string>());
    cfg = ckpt.model_config.at("mapper").get<MapperConfig>();
    diff_steps = ckpt.model_config.value("diff_steps", 1000);
    shift = ckpt.model_config.value("target_shift", std::vector<float>{});
    scale = ckpt.model_config.value("target_scale", 1.0f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint model config: ") + e.what());
  }
  Model m = init_model(kind, cfg, 0);
  m.diff_steps = diff_steps;
  if (kind == MapperKind::kDiffusion) {
    if (shift.empty()) shift.assign(static_cast<std::size_t>(cfg.target_dim), 0.0f);
    if (static_cast<int>(shift.size()) != cfg.target_dim || !(scale > 0.0f)) {
      throw FormatError("checkpoint target normalization does not match the mapper");
    }
    m.target_shift = Eigen::Map<const Eigen::RowVectorXf>(shift.data(), cfg.target_dim);
    m.target_scale = scale;
  }
  if (kind == MapperKind::kAutoregressive) {
    assign_named_tensors(m.ar, ckpt.params);
  } else {
    assign_named_tensors(m.diff, ckpt.params);
  }
  return m;
}

void save_model(const Model& model, const fs::path& path) {
  Checkpoint c;
  c.model_config = model_config_json(model);
  c.params = model_tensors(model);
  save_checkpoint(c, path);
}

Model load_model(const fs::path& path) { return model_from_checkpoint(load_checkpoint(path)); }

MatrixF predict(const Model& model, const SplitData& split, const EvalOptions& opts) {
  const std::size_t n = opts.subset == 0 ? split.size() : std::min(opts.subset, split.size());
  if (n == 0) throw ArgumentError("predict: empty split");
  const auto& cfg = model.config();
  const std::size_t bs = static_cast<std::size_t>(std::max(opts.batch_size, 1));
  MatrixF out(static_cast<Eigen::Index>(n) * cfg.target_len, cfg.target_dim);
  const DiffusionSchedule sched =
      model.kind == MapperKind::kDiffusion ? make_schedule(opts.diff_steps > 0 ? opts.diff_steps : model.diff_steps)
                                           : DiffusionSchedule{};
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t end = std::min(n, start + bs);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch<float> b = make_batch<float>(split, idx);
    MatrixF pred;
    if (model.kind == MapperKind::kAutoregressive) {
      pred = generate(model.ar, b);
    } else {
      Rng rng(mix_seed({opts.noise_seed, start}));
      pred = diff_sample(model.diff, b, sched, opts.diff_sample_steps, rng) * model.target_scale;
      pred.rowwise() += model.target_shift;
    }
    out.middleRows(static_cast<Eigen::Index>(start) * cfg.target_len, pred.rows()) = pred;
  }
  return out;
}

namespace {

// Stacked (n*T_c) x Dc targets for the first n samples.
MatrixF stacked_targets(const SplitData& split, std::size_t n) {
  const auto& d = split.target.dims;
  MatrixF m(static_cast<Eigen::Index>(n) * d[1], d[2]);
  for (std::size_t i = 0; i < n; ++i) m.middleRows(static_cast<Eigen::Index>(i) * d[1], d[1]) = split.target.item(i);
  return m;
}

double stacked_mse(const MatrixF& target, const MatrixF& pred, std::size_t n) {
  return (target.cast<double>() - pred.cast<double>()).squaredNorm() /
         static_cast<double>(target.rows() / static_cast<Eigen::Index>(n)) / static_cast<double>(n);
}

}  // namespace

double evaluate_loss(const Model& model, const SplitData& split, const EvalOptions& opts) {
  const std::size_t n = opts.subset == 0 ? split.size() : std::min(opts.subset, split.size());
  return stacked_mse(stacked_targets(split, n), predict(model, split, opts), n);
}

MatrixF mean_target(const SplitData& train) {
  const auto& d = train.target.dims;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d[1], d[2]);
  for (std::size_t i = 0; i < train.size(); ++i) acc += train.target.item(i).cast<double>();
  acc /= static_cast<double>(train.size());
  return acc.cast<float>();
}

double mean_predictor_mse(const Dataset& dataset) {
  const MatrixF mean = mean_target(dataset.train);
  const std::size_t n = dataset.test.size();
  MatrixF pred(static_cast<Eigen::Index>(n) * mean.rows(), mean.cols());
  for (std::size_t i = 0; i < n; ++i) pred.middleRows(static_cast<Eigen::Index>(i) * mean.rows(), mean.rows()) = mean;
  return stacked_mse(stacked_targets(dataset.test, n), pred, n);
}

std::string loss_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,train_mse,test_mse\n";
  os << std::setprecision(9);
  for (const auto& e : log) {
    os << e.epoch << ',' << e.train_mse << ',';
    if (std::isnan(e.test_mse)) {
      os << "nan";
    } else {
      os << e.test_mse;
    }
    os << '\n';
  }
  return os.str();
}

namespace {

nlohmann::json log_to_json(const std::vector<EpochLog>& log) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : log) {
    nlohmann::json row = {{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"test_mse", nullptr}};
    if (!std::isnan(e.test_mse)) row["test_mse"] = e.test_mse;
    arr.push_back(row);
  }
  return arr;
}

std::vector<EpochLog> log_from_json(const nlohmann::json& arr) {
  std::vector<EpochLog> log;
  for (const auto& row : arr) {
    EpochLog e;
    e.epoch = row.at("epoch").get<int>();
    e.train_mse = row.at("train_mse").get<double>();
    e.test_mse = row.at("test_mse").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                              : row.at("test_mse").get<double>();
    log.push_back(e);
  }
  return log;
}

// Training state shared by both mapper kinds.
template <typename P>
struct Run {
  P params;
  OptimizerState<P> opt;
};

template <typename P, typename StepFn>
double run_epoch(Run<P>& run, const SplitData& train, const TrainConfig& cfg, int epoch, StepFn&& step,
                 double& max_clipped) {
  const std::size_t n = train.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const auto perm = permutation(n, mix_seed({cfg.seed, static_cast<std::uint64_t>(epoch)}));
  const AdamWConfig acfg = cfg.adamw();
  P grads;
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t end = std::min(n, start + bs);
    const std::span<const std::size_t> idx(perm.data() + start, end - start);
    const Batch<float> b = make_batch<float>(train, idx);
    const double loss = static_cast<double>(step(run.params, b, grads));
    clip_global_norm(grads, cfg.grad_clip_norm);
    max_clipped = std::max(max_clipped, global_grad_norm(grads));
    adamw_step(run.params, grads, run.opt, acfg);
    total += loss * static_cast<double>(end - start);
  }
  return total / static_cast<double>(n);
}

}  // namespace

Model initial_model(MapperKind kind, const Dataset& data, const MapperConfig& mcfg, const TrainConfig& cfg) {
  Model model = init_model(kind, mcfg, cfg.seed);
  model.diff_steps = cfg.diff_steps;
  if (kind == MapperKind::kAutoregressive) {
    model.ar.head.b = mean_target(data.train).colwise().mean();
  } else {
    const MatrixF c = stacked_targets(data.train, data.train.size());
    const Eigen::RowVectorXd mu = c.cast<double>().colwise().mean();
    const double var = (c.cast<double>().rowwise() - mu).squaredNorm() / static_cast<double>(c.size());
    model.target_shift = mu.cast<float>();
    model.target_scale = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
  }
  return model;
}

TrainResult train_model(MapperKind kind, const Dataset& data, const MapperConfig& mcfg, const TrainConfig& cfg,
                        const TrainOptions& opts) {
  cfg.validate();
  mcfg.validate();
  const auto& w = data.world();
  if (mcfg.fast_dim != w.fast_dim || mcfg.slow_dim != w.slow_dim || mcfg.target_dim != w.target_dim ||
      mcfg.fast_len != w.fast_frames || mcfg.slow_len != w.windows || mcfg.target_len != w.windows) {
    throw ConfigError("mapper config dims (D1/D2/Dc/T1/W) do not match the dataset");
  }

  TrainResult result;
  Model& model = result.model;
  int start_epoch = 1;
  Rng diff_rng(mix_seed({cfg.seed, 0xd1ffULL}));
  std::optional<OptimizerSnapshot> opt_snap;

  if (opts.resume) {
    const Checkpoint ck = load_checkpoint(*opts.resume);
    model = model_from_checkpoint(ck);
    if (model.kind != kind) throw ConfigError("resume checkpoint holds a different mapper kind");
    if (!(model.config() == mcfg)) throw ConfigError("resume checkpoint mapper config differs from the requested one");
    if (kind == MapperKind::kDiffusion && model.diff_steps != cfg.diff_steps) {
      throw ConfigError("resume checkpoint was trained with a different diff_steps");
    }
    if (!ck.optimizer) throw FormatError("resume checkpoint has no optimizer state: " + opts.resume->string());
    opt_snap = ck.optimizer;
    if (!ck.rng_state.empty()) diff_rng.set_state(ck.rng_state);
    if (ck.extra.contains("loss_log")) result.log = log_from_json(ck.extra.at("loss_log"));
    start_epoch = ck.epoch + 1;
  } else {
    model = initial_model(kind, data, mcfg, cfg);
  }

  const EvalOptions eval{cfg.eval_subset, 64, cfg.diff_sample_steps, mix_seed({cfg.seed, 0xe7a1ULL}), cfg.diff_steps};
  const DiffusionSchedule sched = make_schedule(cfg.diff_steps);

  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    nlohmann::json snap = {{"mapper_kind", std::string(to_string(kind))},
                           {"mapper", mcfg},
                           {"train", cfg},
                           {"world", w},
                           {"n_train", data.train.size()},
                           {"n_test", data.test.size()}};
    write_file_atomic(opts.out_dir / "config.json", snap.dump(2) + "\n");
  }

  auto make_checkpoint = [&](int epoch, const OptimizerSnapshot& os) {
    Checkpoint c;
    c.model_config = model_config_json(model);
    c.params = model_tensors(model);
    c.optimizer = os;
    c.rng_state = diff_rng.state();
    c.epoch = epoch;
    c.extra = {{"loss_log", log_to_json(result.log)}, {"train", cfg}};
    return c;
  };

  auto loop = [&](auto& run, auto&& step) {
    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
      EpochLog e;
      e.epoch = epoch;
      try {
        e.train_mse = run_epoch(run, data.train, cfg, epoch, step, result.max_clipped_norm);
      } catch (const NumericError& err) {
        throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": " + err.what() +
                           (opts.out_dir.empty() ? std::string() : "; last good checkpoint kept in " +
                                                                       opts.out_dir.string()));
      }
      if constexpr (std::is_same_v<std::decay_t<decltype(run.params)>, MapperParams<float>>) {
        model.ar = run.params;
      } else {
        model.diff = run.params;
      }
      e.test_mse = std::numeric_limits<double>::quiet_NaN();
      if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) e.test_mse = evaluate_loss(model, data.test, eval);
      result.log.push_back(e);
      if (opts.on_epoch) opts.on_epoch(e);
      if (!opts.out_dir.empty()) {
        write_file_atomic(opts.out_dir / "loss_log.csv", loss_log_csv(result.log));
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
          save_checkpoint(make_checkpoint(epoch, snapshot(run.opt)),
                          opts.out_dir / ("ckpt_epoch_" + std::to_string(epoch) + ".mfmc"));
        }
      }
    }
    if (!opts.out_dir.empty()) save_checkpoint(make_checkpoint(cfg.epochs, snapshot(run.opt)), opts.out_dir / "final.mfmc");
  };

  if (kind == MapperKind::kAutoregressive) {
    Run<MapperParams<float>> run{model.ar, opt_snap ? restore_optimizer(model.ar, *opt_snap)
                                                    : OptimizerState<MapperParams<float>>::zeros(model.ar)};
    loop(run, [](const MapperParams<float>& p, const Batch<float>& b, MapperParams<float>& g) {
      return loss_and_grads(p, b, g);
    });
  } else {
    Run<DiffMapperParams<float>> run{model.diff, opt_snap ? restore_optimizer(model.diff, *opt_snap)
                                                          : OptimizerState<DiffMapperParams<float>>::zeros(model.diff)};
    loop(run, [&](const DiffMapperParams<float>& p, const Batch<float>& b, DiffMapperParams<float>& g) {
      Batch<float> nb = b;
      nb.target = (b.target.rowwise() - model.target_shift) / model.target_scale;
      return diff_train_step(p, nb, sched, diff_rng, g);
    });
  }
  return result;
}

fs::path train(MapperKind kind, const fs::path& dataset_dir, FusionMode fusion, const TrainConfig& cfg,
               const fs::path& out_dir) {
  cfg.validate();
  const Dataset data = load_dataset(dataset_dir);
  const MapperConfig mcfg = MapperConfig::for_world(data.world(), cfg.preset, fusion);
  TrainOptions opts;
  opts.out_dir = out_dir;
  train_model(kind, data, mcfg, cfg, opts);
  return out_dir / "final.mfmc";
}

}  // namespace mfm
