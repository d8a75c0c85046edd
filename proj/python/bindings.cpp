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


#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mfm/dataset.hpp"
#include "mfm/errors.hpp"
#include "mfm/fusion.hpp"
#include "mfm/metrics.hpp"
#include "mfm/trainer.hpp"

namespace py = pybind11;
using namespace mfm;

namespace {

py::array_t<float> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
  py::array_t<float> a(shape);
  std::copy(t.values.begin(), t.values.end(), a.mutable_data());
  return a;
}

py::dict split_dict(const SplitData& s) {
  py::dict d;
  d["fast"] = to_numpy(s.fast);
  d["slow"] = to_numpy(s.slow);
  d["target"] = to_numpy(s.target);
  py::list events;
  for (const auto& script : s.scripts) {
    py::list row;
    for (const auto& e : script.events) row.append(py::make_tuple(e.class_id, e.onset_s));
    events.append(row);
  }
  d["events"] = events;
  return d;
}

// N x W x Dc array -> stacked (N*W) x Dc.
MatrixF stacked(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw ArgumentError("predictions must be N x W x Dc");
  MatrixF m(a.shape(0) * a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

py::array_t<float> unstacked(const MatrixF& m, std::size_t n) {
  const auto w = static_cast<py::ssize_t>(m.rows() / static_cast<Eigen::Index>(n));
  py::array_t<float> a({static_cast<py::ssize_t>(n), w, static_cast<py::ssize_t>(m.cols())});
  std::copy(m.data(), m.data() + m.size(), a.mutable_data());
  return a;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["n_samples"] = r.n_samples;
  d["mse"] = r.mse;
  d["fd"] = r.fd;
  d["kl"] = r.kl;
  d["is_score"] = r.is_score;
  d["alignment"] = r.alignment;
  d["desync_s"] = r.desync_s;
  return d;
}

WorldConfig world_for(const std::string& preset, std::uint64_t seed) {
  WorldConfig w = parse_preset(preset) == Preset::kDesk ? WorldConfig::desk() : WorldConfig::paper();
  w.seed = seed;
  return w;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Visual-to-audio embedding mapper on a synthetic world";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& out_dir, std::size_t n_train, std::size_t n_test, const std::string& preset,
         std::uint64_t seed) {
        const DatasetManifest man = generate_dataset(world_for(preset, seed), n_train, n_test, out_dir);
        return man.to_json().dump();
      },
      py::arg("out_dir"), py::arg("n_train") = 2000, py::arg("n_test") = 500, py::arg("preset") = "desk",
      py::arg("seed") = 17, "Writes a dataset directory and returns its manifest as JSON text.");

  m.def(
      "load_dataset",
      [](const std::filesystem::path& dir) {
        const Dataset d = load_dataset(dir);
        py::dict out;
        out["train"] = split_dict(d.train);
        out["test"] = split_dict(d.test);
        out["manifest"] = d.manifest.to_json().dump();
        return out;
      },
      py::arg("dir"));

  m.def(
      "upsample",
      [](const Eigen::MatrixXd& x, int target_len) { return Eigen::MatrixXd(upsample_rows<double>(x, target_len)); },
      py::arg("x"), py::arg("target_len"), "Replicates rows of a T x D array to target_len rows.");

  m.def(
      "train",
      [](const std::string& mapper, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
         const std::string& fusion, const std::string& config_json) {
        TrainConfig cfg;
        if (!config_json.empty()) {
          // Given keys override the defaults; unknown keys are rejected.
          nlohmann::json merged = cfg;
          const nlohmann::json given = nlohmann::json::parse(config_json);
          for (const auto& [key, value] : given.items()) {
            if (!merged.contains(key)) throw ConfigError("train config: unknown key '" + key + "'");
            merged[key] = value;
          }
          cfg = merged.get<TrainConfig>();
        }
        py::gil_scoped_release release;
        return train(parse_mapper_kind(mapper), data_dir, parse_fusion_mode(fusion), cfg, out_dir);
      },
      py::arg("mapper"), py::arg("data_dir"), py::arg("out_dir"), py::arg("fusion") = "channel_proj",
      py::arg("config_json") = "", "Trains a mapper and returns the path of the final checkpoint.");

  m.def(
      "predict",
      [](const std::filesystem::path& model_path, const std::filesystem::path& data_dir, std::size_t subset,
         int diff_sample_steps) {
        const Model model = load_model(model_path);
        const Dataset d = load_dataset(data_dir);
        EvalOptions opts;
        opts.subset = subset;
        opts.diff_sample_steps = diff_sample_steps;
        MatrixF p;
        {
          py::gil_scoped_release release;
          p = predict(model, d.test, opts);
        }
        return unstacked(p, subset > 0 ? std::min(subset, d.test.size()) : d.test.size());
      },
      py::arg("model"), py::arg("data_dir"), py::arg("subset") = 0, py::arg("diff_sample_steps") = 100,
      "Test-split predictions, N x W x Dc.");

  m.def(
      "evaluate",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
         const std::filesystem::path& data_dir) {
        return report_dict(evaluate_predictions(stacked(pred), load_dataset(data_dir)));
      },
      py::arg("pred"), py::arg("data_dir"), "All metrics for N x W x Dc test-split predictions.");

  m.def(
      "mean_predictor_mse", [](const std::filesystem::path& data_dir) { return mean_predictor_mse(load_dataset(data_dir)); },
      py::arg("data_dir"));

  m.def("frechet_distance", &frechet_distance, py::arg("a"), py::arg("b"));
}
