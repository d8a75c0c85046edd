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


#include "mfm/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mfm/errors.hpp"

namespace mfm {
namespace {

constexpr std::uint64_t kPrototypeStream = 0x70726f746fULL;  // "proto"

MatrixF gaussian_unit_rows(int rows, int cols, Rng& rng) {
  MatrixF m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<float>(rng.normal());
    m.row(i).normalize();
  }
  return m;
}

}  // namespace

WorldConfig WorldConfig::desk() { return WorldConfig{}; }

WorldConfig WorldConfig::paper() {
  WorldConfig c;
  c.num_classes = 16;
  c.fast_dim = 512;
  c.slow_dim = 768;
  c.target_dim = 768;
  return c;
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("world config field '" + field + "': " + why);
  };
  if (num_classes < 2) fail("K", "must be >= 2");
  if (windows < 1) fail("W", "must be >= 1");
  if (!(duration_s > 0)) fail("duration_s", "must be positive");
  if (!(fast_fps > 0)) fail("fast_fps", "must be positive");
  if (fast_frames != static_cast<int>(std::lround(fast_fps * duration_s))) {
    fail("T1", "must equal fast_fps x duration");
  }
  if (fast_frames < windows) fail("T1", "must be >= W");
  if (fast_dim < 1) fail("D1", "must be >= 1");
  if (slow_dim < 1) fail("D2", "must be >= 1");
  if (target_dim < num_classes + 1) fail("Dc", "must be >= K+1 so prototypes and baseline fit orthogonally");
  if (!(fast_noise >= 0)) fail("eta1", "must be >= 0");
  if (!(slow_noise >= 0)) fail("eta2", "must be >= 0");
  if (!(target_noise >= 0)) fail("sigma_c", "must be >= 0");
  if (pulse_width < 1) fail("pulse_width", "must be >= 1");
  if (!(class_leak >= 0)) fail("lambda1", "must be >= 0");
}

void to_json(nlohmann::json& j, const WorldConfig& c) {
  j = nlohmann::json{{"K", c.num_classes},        {"T1", c.fast_frames},     {"fast_fps", c.fast_fps},
                     {"W", c.windows},            {"D1", c.fast_dim},        {"D2", c.slow_dim},
                     {"Dc", c.target_dim},        {"eta1", c.fast_noise},    {"eta2", c.slow_noise},
                     {"sigma_c", c.target_noise}, {"pulse_width", c.pulse_width},
                     {"lambda1", c.class_leak},   {"duration_s", c.duration_s},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
  j.at("K").get_to(c.num_classes);
  j.at("T1").get_to(c.fast_frames);
  j.at("fast_fps").get_to(c.fast_fps);
  j.at("W").get_to(c.windows);
  j.at("D1").get_to(c.fast_dim);
  j.at("D2").get_to(c.slow_dim);
  j.at("Dc").get_to(c.target_dim);
  j.at("eta1").get_to(c.fast_noise);
  j.at("eta2").get_to(c.slow_noise);
  j.at("sigma_c").get_to(c.target_noise);
  j.at("pulse_width").get_to(c.pulse_width);
  j.at("lambda1").get_to(c.class_leak);
  j.at("duration_s").get_to(c.duration_s);
  j.at("seed").get_to(c.seed);
}

void EventScript::validate(int num_classes) const {
  if (events.empty() || events.size() > 3) throw ValidationError("event script needs 1..3 events");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!(e.onset_s >= 0.0 && e.onset_s < duration_s)) throw ValidationError("event onset outside [0, duration)");
    if (e.class_id < 0 || e.class_id >= num_classes) throw ValidationError("event class id out of range");
    if (!(e.intensity >= 0.5 && e.intensity <= 1.0)) throw ValidationError("event intensity outside [0.5, 1]");
    if (i > 0 && events[i - 1].onset_s > e.onset_s) throw ValidationError("events not sorted by onset");
  }
}

void to_json(nlohmann::json& j, const EventScript& s) {
  j = nlohmann::json{{"duration_s", s.duration_s}, {"events", nlohmann::json::array()}};
  for (const auto& e : s.events) {
    j["events"].push_back({{"onset_s", e.onset_s}, {"class_id", e.class_id}, {"intensity", e.intensity}});
  }
}

void from_json(const nlohmann::json& j, EventScript& s) {
  j.at("duration_s").get_to(s.duration_s);
  s.events.clear();
  for (const auto& e : j.at("events")) {
    s.events.push_back({e.at("onset_s").get<double>(), e.at("class_id").get<int>(), e.at("intensity").get<double>()});
  }
}

WorldPrototypes build_prototypes(const WorldConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed({cfg.seed, kPrototypeStream}));
  WorldPrototypes p;
  p.semantic = gaussian_unit_rows(cfg.num_classes, cfg.slow_dim, rng);
  p.class_leak = gaussian_unit_rows(cfg.num_classes, cfg.fast_dim, rng);
  p.onset = gaussian_unit_rows(1, cfg.fast_dim, rng);

  // Modified Gram-Schmidt in double on K+1 Gaussian draws: rows 0..K-1 are
  // the audio class prototypes, row K the baseline.
  const int n = cfg.num_classes + 1;
  Eigen::MatrixXd basis(n, cfg.target_dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < cfg.target_dim; ++j) basis(i, j) = rng.normal();
  }
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < i; ++k) basis.row(i) -= basis.row(i).dot(basis.row(k)) * basis.row(k);
    const double norm = basis.row(i).norm();
    if (norm < 1e-9) throw NumericError("degenerate draw while orthonormalizing prototypes");
    basis.row(i) /= norm;
  }
  p.audio = basis.topRows(cfg.num_classes).cast<float>();
  p.baseline = basis.bottomRows(1).cast<float>();
  return p;
}

EventScript sample_script(const WorldConfig& cfg, Rng& rng, bool single_event) {
  EventScript s;
  s.duration_s = cfg.duration_s;
  const int count = single_event ? 1 : 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < count; ++i) {
    SoundEvent e;
    e.onset_s = rng.uniform(0.0, cfg.duration_s);
    e.class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_classes)));
    e.intensity = rng.uniform(0.5, 1.0);
    s.events.push_back(e);
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const SoundEvent& a, const SoundEvent& b) { return a.onset_s < b.onset_s; });
  return s;
}

double pulse_weight(int j, int width) {
  if (j < 0 || j >= width) return 0.0;
  return std::cos(std::numbers::pi * (j + 0.5 - 0.5 * width) / width);
}

int onset_frame(const WorldConfig& cfg, double onset_s) {
  return static_cast<int>(std::floor(onset_s * cfg.fast_fps));
}

int onset_window(const WorldConfig& cfg, double onset_s) {
  const int w = static_cast<int>(std::floor(onset_s / cfg.window_seconds()));
  return std::clamp(w, 0, cfg.windows - 1);
}

EmbeddingSequence emit_fast_visual(const EventScript& script, const WorldPrototypes& protos,
                                   const WorldConfig& cfg, Rng& rng) {
  script.validate(cfg.num_classes);
  MatrixF v = MatrixF::Zero(cfg.fast_frames, cfg.fast_dim);
  for (const auto& e : script.events) {
    // The class leak rides on the onset pulse, so class evidence in this
    // stream is confined to a couple of frames.
    const Eigen::RowVectorXf direction =
        protos.onset.row(0) + static_cast<float>(cfg.class_leak) * protos.class_leak.row(e.class_id);
    const int f0 = onset_frame(cfg, e.onset_s);
    for (int j = 0; j < cfg.pulse_width && f0 + j < cfg.fast_frames; ++j) {
      v.row(f0 + j) += static_cast<float>(e.intensity * pulse_weight(j, cfg.pulse_width)) * direction;
    }
  }
  if (cfg.fast_noise > 0) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += static_cast<float>(cfg.fast_noise * rng.normal());
  }
  return EmbeddingSequence(std::move(v), cfg.fast_fps, SeqTag::kFastVisual);
}

EmbeddingSequence emit_slow_visual(const EventScript& script, const WorldPrototypes& protos,
                                   const WorldConfig& cfg, Rng& rng) {
  script.validate(cfg.num_classes);
  Eigen::RowVectorXf mean = Eigen::RowVectorXf::Zero(cfg.slow_dim);
  for (const auto& e : script.events) mean += protos.semantic.row(e.class_id);
  mean /= static_cast<float>(script.events.size());
  MatrixF v = mean.replicate(cfg.windows, 1);
  if (cfg.slow_noise > 0) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += static_cast<float>(cfg.slow_noise * rng.normal());
  }
  return EmbeddingSequence(std::move(v), cfg.slow_fps(), SeqTag::kSlowVisual);
}

EmbeddingSequence emit_audio_target(const EventScript& script, const WorldPrototypes& protos,
                                    const WorldConfig& cfg, Rng& rng) {
  script.validate(cfg.num_classes);
  MatrixF c = MatrixF::Zero(cfg.windows, cfg.target_dim);
  std::vector<bool> occupied(cfg.windows, false);
  for (const auto& e : script.events) {
    const int w = onset_window(cfg, e.onset_s);
    c.row(w) += static_cast<float>(e.intensity) * protos.audio.row(e.class_id);
    occupied[w] = true;
  }
  for (int w = 0; w < cfg.windows; ++w) {
    if (!occupied[w]) c.row(w) = protos.baseline.row(0);
  }
  if (cfg.target_noise > 0) {
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] += static_cast<float>(cfg.target_noise * rng.normal());
  }
  return EmbeddingSequence(std::move(c), cfg.slow_fps(), SeqTag::kAudioTarget);
}

}  // namespace mfm
