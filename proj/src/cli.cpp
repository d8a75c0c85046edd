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


#include "mfm/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mfm/ablation.hpp"
#include "mfm/dataset.hpp"
#include "mfm/errors.hpp"
#include "mfm/metrics.hpp"
#include "mfm/trainer.hpp"

namespace mfm {
namespace {

namespace fs = std::filesystem;

struct GenDataArgs {
  std::string preset = "desk";
  std::uint64_t seed = 17;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::optional<double> eta1, eta2, sigma_c, lambda1;
  std::optional<int> pulse_width;
  std::string out;
};

struct ModelArgs {
  std::string mapper = "ar";
  std::string fusion = "channel_proj";
  int d_model = 0;
  int n_layers = 0;
  int n_heads = 0;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string resume;
  std::string preset = "desk";
  ModelArgs model;
  TrainConfig train;
};

struct InferArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string split = "test";
  int diff_sample_steps = 100;
  std::uint64_t noise_seed = 0x5eed;
};

struct EvalArgs {
  std::string pred;
  std::string data;
  std::string out;
};

struct AblateArgs {
  std::string suite;
  std::string data;
  std::string out;
  std::string preset = "desk";
  std::vector<std::uint64_t> seeds{17, 18, 19};
  ModelArgs model;
  TrainConfig train;
  std::size_t final_eval_subset = 0;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

void add_train_options(CLI::App* app, TrainConfig& t) {
  app->add_option("--epochs", t.epochs, "Training epochs");
  app->add_option("--batch-size", t.batch_size, "Mini-batch size");
  app->add_option("--lr", t.lr, "AdamW learning rate");
  app->add_option("--weight-decay", t.weight_decay, "Decoupled weight decay");
  app->add_option("--grad-clip", t.grad_clip_norm, "Global gradient norm cap");
  app->add_option("--seed", t.seed, "Training seed");
  app->add_option("--checkpoint-every", t.checkpoint_every, "Checkpoint cadence in epochs (0 = final only)");
  app->add_option("--eval-every", t.eval_every, "Test-MSE cadence in epochs");
  app->add_option("--eval-subset", t.eval_subset, "Leading test samples used for per-epoch test MSE (0 = all)");
  app->add_option("--diff-steps", t.diff_steps, "Diffusion schedule length");
  app->add_option("--diff-sample-steps", t.diff_sample_steps, "DDIM steps used for evaluation");
}

void add_model_options(CLI::App* app, ModelArgs& m) {
  app->add_option("--mapper", m.mapper, "ar | diff");
  app->add_option("--fusion", m.fusion, "channel_proj | add | time_cat | cavp_only | timechat_only");
  app->add_option("--d-model", m.d_model, "Override the preset width");
  app->add_option("--n-layers", m.n_layers, "Override the preset depth");
  app->add_option("--n-heads", m.n_heads, "Override the preset head count");
}

MapperConfig build_mapper_config(const WorldConfig& world, Preset preset, const ModelArgs& m) {
  MapperConfig c = MapperConfig::for_world(world, preset, parse_fusion_mode(m.fusion));
  if (m.d_model > 0) c.d_model = m.d_model;
  if (m.n_layers > 0) c.n_layers = m.n_layers;
  if (m.n_heads > 0) c.n_heads = m.n_heads;
  c.validate();
  return c;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

int run_gen_data(const GenDataArgs& a, std::ostream& out) {
  WorldConfig w = parse_preset(a.preset) == Preset::kDesk ? WorldConfig::desk() : WorldConfig::paper();
  w.seed = a.seed;
  if (a.eta1) w.fast_noise = *a.eta1;
  if (a.eta2) w.slow_noise = *a.eta2;
  if (a.sigma_c) w.target_noise = *a.sigma_c;
  if (a.lambda1) w.class_leak = *a.lambda1;
  if (a.pulse_width) w.pulse_width = *a.pulse_width;
  w.validate();
  if (a.n_train == 0) throw ConfigError("gen-data field 'n-train': must be >= 1");
  if (a.n_test == 0) throw ConfigError("gen-data field 'n-test': must be >= 1");
  require(a.out, "--out");
  generate_dataset(w, a.n_train, a.n_test, a.out);
  out << "gen-data: " << a.n_train << " train / " << a.n_test << " test samples (K=" << w.num_classes
      << ", seed " << w.seed << ") -> " << a.out << "\n";
  return 0;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const MapperKind kind = parse_mapper_kind(a.model.mapper);
  const FusionMode fusion = parse_fusion_mode(a.model.fusion);
  (void)fusion;
  TrainConfig cfg = a.train;
  cfg.preset = parse_preset(a.preset);
  cfg.validate();
  require(a.data, "--data");
  require(a.out, "--out");
  const Dataset data = load_dataset(a.data);
  const MapperConfig mcfg = build_mapper_config(data.world(), cfg.preset, a.model);
  TrainOptions opts;
  opts.out_dir = a.out;
  if (!a.resume.empty()) opts.resume = fs::path(a.resume);
  const TrainResult r = train_model(kind, data, mcfg, cfg, opts);
  const EpochLog& last = r.log.back();
  out << "train: " << to_string(kind) << "/" << to_string(mcfg.fusion) << " " << cfg.epochs
      << " epochs, train_mse " << fmt(last.train_mse) << ", test_mse " << fmt(last.test_mse) << " (mean-predictor "
      << fmt(mean_predictor_mse(data)) << ") -> " << (fs::path(a.out) / "final.mfmc").string() << "\n";
  return 0;
}

int run_infer(const InferArgs& a, std::ostream& out) {
  require(a.model, "--model");
  require(a.data, "--data");
  require(a.out, "--out");
  if (a.split != "test" && a.split != "train") throw ConfigError("infer field 'split': expected train|test");
  const Model model = load_model(a.model);
  const Dataset data = load_dataset(a.data);
  const SplitData& split = data.split(a.split == "test" ? Split::kTest : Split::kTrain);
  EvalOptions eo;
  eo.diff_sample_steps = a.diff_sample_steps;
  eo.noise_seed = a.noise_seed;
  const MatrixF pred = predict(model, split, eo);
  const auto& cfg = model.config();
  Tensor t({static_cast<std::uint32_t>(split.size()), static_cast<std::uint32_t>(cfg.target_len),
            static_cast<std::uint32_t>(cfg.target_dim)});
  std::copy(pred.data(), pred.data() + pred.size(), t.values.begin());
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_tensor(t, a.out);
  out << "infer: " << split.size() << " " << a.split << " predictions (" << to_string(model.kind) << ") -> " << a.out
      << "\n";
  return 0;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  require(a.pred, "--pred");
  require(a.data, "--data");
  require(a.out, "--out");
  const EvalReport r = evaluate(a.pred, a.data, a.out);
  out << "eval: n=" << r.n_samples << " mse " << fmt(r.mse) << " fd " << fmt(r.fd) << " kl " << fmt(r.kl) << " is "
      << fmt(r.is_score) << " alignment " << fmt(r.alignment) << " desync " << fmt(r.desync_s) << "s -> "
      << (fs::path(a.out) / "report.json").string() << "\n";
  return 0;
}

int thread_count() {
  const char* env = std::getenv("MFM_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    const int n = std::stoi(env);
    if (n < 1) throw ConfigError("MFM_THREADS must be >= 1");
    return n;
  } catch (const std::logic_error&) {
    throw ConfigError(std::string("MFM_THREADS is not an integer: ") + env);
  }
}

int run_ablate(const AblateArgs& a, std::ostream& out) {
  require(a.suite, "--suite");
  const AblationSuite suite = parse_suite(a.suite);
  AblationOptions opts;
  opts.train = a.train;
  opts.train.preset = parse_preset(a.preset);
  opts.train.validate();
  opts.seeds = a.seeds;
  opts.d_model = a.model.d_model;
  opts.n_layers = a.model.n_layers;
  opts.n_heads = a.model.n_heads;
  opts.eval_subset = a.final_eval_subset;
  opts.threads = thread_count();
  require(a.data, "--data");
  require(a.out, "--out");
  opts.out_dir = a.out;
  const Dataset data = load_dataset(a.data);
  const AblationResult r = run_ablation(suite, data, opts);
  std::size_t n_mean = 0;
  for (const auto& row : r.rows) n_mean += row.seed == "mean";
  out << "ablate: suite " << to_string(suite) << ", " << r.rows.size() - n_mean << " runs + " << n_mean
      << " mean rows -> " << (fs::path(a.out) / "ablation.csv").string() << "\n";
  return 0;
}

// Config file sections are keyed by command; each entry becomes
// `--key=value` ahead of the command-line flags, so flags win.
std::vector<std::string> config_args(const nlohmann::json& cfg, const std::string& command, CLI::App* sub) {
  std::vector<std::string> out;
  if (!cfg.is_object()) throw ConfigError("config file: top level must be an object");
  for (const auto& [section, _] : cfg.items()) {
    if (section != "gen-data" && section != "train" && section != "infer" && section != "eval" &&
        section != "ablate") {
      throw ConfigError("config file: unknown section '" + section + "'");
    }
  }
  if (!cfg.contains(command)) return out;
  const auto& sec = cfg.at(command);
  if (!sec.is_object()) throw ConfigError("config file: section '" + command + "' must be an object");
  for (const auto& [key, value] : sec.items()) {
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (sub->get_option_no_throw("--" + flag) == nullptr) {
      throw ConfigError("config file: unknown key '" + key + "' in section '" + command + "'");
    }
    std::string v;
    if (value.is_string()) {
      v = value.get<std::string>();
    } else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) v += (i ? "," : "") + value[i].dump();
    } else {
      v = value.dump();
    }
    out.push_back("--" + flag + "=" + v);
  }
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const ValidationError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return 3;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 3;
  return 1;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Desk-scale video-to-audio embedding mapper", "mfm"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (default: ./mfm.json if present)");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--preset", gen.preset, "desk | paper");
  gen_cmd->add_option("--seed", gen.seed, "World seed");
  gen_cmd->add_option("--n-train", gen.n_train, "Training samples");
  gen_cmd->add_option("--n-test", gen.n_test, "Test samples (single-event)");
  gen_cmd->add_option("--eta1", gen.eta1, "Fast-stream noise std");
  gen_cmd->add_option("--eta2", gen.eta2, "Slow-stream noise std");
  gen_cmd->add_option("--sigma-c", gen.sigma_c, "Target noise std");
  gen_cmd->add_option("--lambda1", gen.lambda1, "Fast-stream class leak");
  gen_cmd->add_option("--pulse-width", gen.pulse_width, "Onset pulse width in frames");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a mapper");
  train_cmd->add_option("--data", tr.data, "Dataset directory");
  train_cmd->add_option("--out", tr.out, "Run directory");
  train_cmd->add_option("--preset", tr.preset, "desk | paper");
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to continue from");
  add_model_options(train_cmd, tr.model);
  add_train_options(train_cmd, tr.train);

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Predict target sequences for a split");
  infer_cmd->add_option("--model", inf.model, "Checkpoint (.mfmc)");
  infer_cmd->add_option("--data", inf.data, "Dataset directory");
  infer_cmd->add_option("--out", inf.out, "Output prediction tensor (.mfmt)");
  infer_cmd->add_option("--split", inf.split, "train | test");
  infer_cmd->add_option("--diff-sample-steps", inf.diff_sample_steps, "DDIM steps for the diffusion mapper");
  infer_cmd->add_option("--noise-seed", inf.noise_seed, "Initial-noise seed for the diffusion mapper");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against the test split");
  eval_cmd->add_option("--pred", ev.pred, "Prediction tensor (.mfmt)");
  eval_cmd->add_option("--data", ev.data, "Dataset directory");
  eval_cmd->add_option("--out", ev.out, "Report directory");

  AblateArgs ab;
  ab.train.eval_every = 10;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation suite");
  ablate_cmd->add_option("--suite", ab.suite, "encoders | fusion | mapper");
  ablate_cmd->add_option("--data", ab.data, "Dataset directory");
  ablate_cmd->add_option("--out", ab.out, "Output directory");
  ablate_cmd->add_option("--preset", ab.preset, "desk | paper");
  ablate_cmd->add_option("--seeds", ab.seeds, "Comma-separated training seeds")->delimiter(',');
  ablate_cmd->add_option("--final-eval-subset", ab.final_eval_subset,
                         "Leading test samples for the final metrics (0 = all)");
  ablate_cmd->add_option("--d-model", ab.model.d_model, "Override the preset width");
  ablate_cmd->add_option("--n-layers", ab.model.n_layers, "Override the preset depth");
  ablate_cmd->add_option("--n-heads", ab.model.n_heads, "Override the preset head count");
  add_train_options(ablate_cmd, ab.train);
  ablate_cmd->remove_option(ablate_cmd->get_option("--seed"));

  try {
    // Locate the command and an explicit --config before full parsing.
    std::vector<std::string> argv = args;
    std::size_t cmd_pos = argv.size();
    for (std::size_t i = 0; i < argv.size(); ++i) {
      if (argv[i] == "--config" && i + 1 < argv.size()) {
        config_path = argv[++i];
      } else if (argv[i].rfind("--config=", 0) == 0) {
        config_path = argv[i].substr(9);
      } else if (!argv[i].empty() && argv[i][0] != '-' && cmd_pos == argv.size()) {
        cmd_pos = i;
      }
    }
    if (config_path.empty() && fs::exists("mfm.json")) config_path = "mfm.json";
    if (!config_path.empty() && cmd_pos < argv.size()) {
      nlohmann::json cfg;
      try {
        cfg = nlohmann::json::parse(read_file(config_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + config_path + ": " + e.what());
      }
      CLI::App* sub = nullptr;
      try {
        sub = app.get_subcommand(argv[cmd_pos]);
      } catch (const CLI::OptionNotFound&) {
      }
      if (sub != nullptr) {
        const auto extra = config_args(cfg, argv[cmd_pos], sub);
        argv.insert(argv.begin() + static_cast<std::ptrdiff_t>(cmd_pos) + 1, extra.begin(), extra.end());
      }
    }
    std::vector<std::string> rev(argv.rbegin(), argv.rend());
    try {
      app.parse(rev);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    }

    if (gen_cmd->parsed()) return run_gen_data(gen, out);
    if (train_cmd->parsed()) return run_train(tr, out);
    if (infer_cmd->parsed()) return run_infer(inf, out);
    if (eval_cmd->parsed()) return run_eval(ev, out);
    if (ablate_cmd->parsed()) return run_ablate(ab, out);
    err << "error: no command given\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace mfm
