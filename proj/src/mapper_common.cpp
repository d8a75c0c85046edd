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


#include "mfm/mapper_common.hpp"

#include <cmath>
#include <map>

#include "mfm/errors.hpp"

namespace mfm {

std::string_view to_string(Preset p) { return p == Preset::kDesk ? "desk" : "paper"; }

Preset parse_preset(std::string_view name) {
  if (name == "desk") return Preset::kDesk;
  if (name == "paper") return Preset::kPaper;
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk|paper)");
}

std::string_view to_string(MapperKind k) { return k == MapperKind::kAutoregressive ? "ar" : "diff"; }

MapperKind parse_mapper_kind(std::string_view name) {
  if (name == "ar") return MapperKind::kAutoregressive;
  if (name == "diff") return MapperKind::kDiffusion;
  throw ConfigError("unknown mapper '" + std::string(name) + "' (expected ar|diff)");
}

MapperConfig MapperConfig::for_world(const WorldConfig& world, Preset preset, FusionMode fusion) {
  MapperConfig c;
  if (preset == Preset::kPaper) {
    c.d_model = 768;
    c.n_layers = 12;
    c.n_heads = 12;
    c.fused_dim = 768;
  }
  c.fusion = fusion;
  c.target_len = world.windows;
  c.target_dim = world.target_dim;
  c.fast_dim = world.fast_dim;
  c.slow_dim = world.slow_dim;
  c.fast_len = world.fast_frames;
  c.slow_len = world.windows;
  c.max_visual_tokens = std::max(48, world.fast_frames + world.windows);
  return c;
}

void MapperConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("mapper config field '" + field + "': " + why);
  };
  if (d_model < 1) fail("d_model", "must be >= 1");
  if (n_layers < 1) fail("n_layers", "must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0) fail("n_heads", "d_model must be divisible by n_heads");
  if (mlp_ratio < 1) fail("mlp_ratio", "must be >= 1");
  if (target_len < 1) fail("T_c", "must be >= 1");
  if (fused_dim < 1) fail("De", "must be >= 1");
  if (target_dim < 1) fail("Dc", "must be >= 1");
  if (fast_dim < 1 || slow_dim < 1) fail("D1/D2", "must be >= 1");
  if (fast_len < slow_len || slow_len < 1) fail("T1/W", "need T1 >= W >= 1");
  if (dropout != 0.0) fail("dropout", "only 0 is supported");
  if (visual_tokens() > max_visual_tokens) fail("T_v_max", "fused sequence longer than the positional table");
}

void to_json(nlohmann::json& j, const MapperConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},
                     {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"mlp_ratio", c.mlp_ratio},
                     {"T_c", c.target_len},
                     {"De", c.fused_dim},
                     {"Dc", c.target_dim},
                     {"T_v_max", c.max_visual_tokens},
                     {"dropout", c.dropout},
                     {"fusion", std::string(to_string(c.fusion))},
                     {"D1", c.fast_dim},
                     {"D2", c.slow_dim},
                     {"T1", c.fast_len},
                     {"W", c.slow_len}};
}

void from_json(const nlohmann::json& j, MapperConfig& c) {
  j.at("d_model").get_to(c.d_model);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("mlp_ratio").get_to(c.mlp_ratio);
  j.at("T_c").get_to(c.target_len);
  j.at("De").get_to(c.fused_dim);
  j.at("Dc").get_to(c.target_dim);
  j.at("T_v_max").get_to(c.max_visual_tokens);
  j.at("dropout").get_to(c.dropout);
  c.fusion = parse_fusion_mode(j.at("fusion").get<std::string>());
  j.at("D1").get_to(c.fast_dim);
  j.at("D2").get_to(c.slow_dim);
  j.at("T1").get_to(c.fast_len);
  j.at("W").get_to(c.slow_len);
}

template <typename T>
Batch<T> make_batch(const SplitData& split, std::span<const std::size_t> indices) {
  const auto B = static_cast<int>(indices.size());
  if (B < 1) throw ArgumentError("empty batch");
  const auto& fd = split.fast.dims;
  const auto& sd = split.slow.dims;
  const auto& td = split.target.dims;
  Batch<T> b;
  b.size = B;
  b.fast.resize(static_cast<Eigen::Index>(B) * fd[1], fd[2]);
  b.slow.resize(static_cast<Eigen::Index>(B) * sd[1], sd[2]);
  b.target.resize(static_cast<Eigen::Index>(B) * td[1], td[2]);
  for (int i = 0; i < B; ++i) {
    const std::size_t idx = indices[i];
    if (idx >= split.size()) throw ArgumentError("batch index out of range");
    b.fast.block(static_cast<Eigen::Index>(i) * fd[1], 0, fd[1], fd[2]) = split.fast.item(idx).cast<T>();
    b.slow.block(static_cast<Eigen::Index>(i) * sd[1], 0, sd[1], sd[2]) = split.slow.item(idx).cast<T>();
    b.target.block(static_cast<Eigen::Index>(i) * td[1], 0, td[1], td[2]) = split.target.item(idx).cast<T>();
  }
  return b;
}

template Batch<float> make_batch<float>(const SplitData&, std::span<const std::size_t>);
template Batch<double> make_batch<double>(const SplitData&, std::span<const std::size_t>);

std::vector<const NamedTensor*> match_named_tensors(const std::vector<NamedTensor>& expected,
                                                    const std::vector<NamedTensor>& got) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : got) by_name[t.name] = &t;
  std::vector<const NamedTensor*> out;
  for (const auto& e : expected) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw ConfigError("checkpoint is missing parameter " + e.name);
    if (it->second->shape != e.shape) {
      throw ConfigError("parameter " + e.name + " has a different shape in the checkpoint than the config implies");
    }
    out.push_back(it->second);
    by_name.erase(it);
  }
  if (!by_name.empty()) throw ConfigError("checkpoint has unknown parameter " + by_name.begin()->first);
  return out;
}

template <typename T>
Mat<T> timestep_embedding(int t, int d) {
  Mat<T> e(1, d);
  const int half = d / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / std::max(half, 1));
    e(0, k) = static_cast<T>(std::sin(t * freq));
    e(0, half + k) = static_cast<T>(std::cos(t * freq));
  }
  if (d % 2 == 1) e(0, d - 1) = 0;
  return e;
}

template Mat<float> timestep_embedding<float>(int, int);
template Mat<double> timestep_embedding<double>(int, int);

}  // namespace mfm
