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

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfm/backbone.hpp"
#include "mfm/checkpoint.hpp"
#include "mfm/dataset.hpp"
#include "mfm/fusion.hpp"

namespace mfm {

enum class Preset { kDesk, kPaper };
std::string_view to_string(Preset p);
Preset parse_preset(std::string_view name);

enum class MapperKind { kAutoregressive, kDiffusion };
std::string_view to_string(MapperKind k);
// Accepts "ar" | "diff".
MapperKind parse_mapper_kind(std::string_view name);

// Shape of a mapper (either kind) including the fusion stage it owns.
struct MapperConfig {
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int mlp_ratio = 4;
  int target_len = 8;          // T_c
  int fused_dim = 64;          // De
  int target_dim = 32;         // Dc
  int max_visual_tokens = 48;  // T_v_max
  double dropout = 0.0;
  FusionMode fusion = FusionMode::kChannelProj;
  int fast_dim = 16;
  int slow_dim = 24;
  int fast_len = 40;
  int slow_len = 8;

  // Preset widths/depths with the input geometry taken from the world.
  static MapperConfig for_world(const WorldConfig& world, Preset preset, FusionMode fusion);

  int visual_tokens() const { return fused_length(fusion, fast_len, slow_len); }
  BackboneShape backbone() const { return {d_model, n_layers, n_heads, mlp_ratio}; }
  void validate() const;

  bool operator==(const MapperConfig&) const = default;
};

void to_json(nlohmann::json& j, const MapperConfig& c);
void from_json(const nlohmann::json& j, MapperConfig& c);

// A mini-batch with samples stacked row-wise: fast (B*T1) x D1,
// slow (B*W) x D2, target (B*T_c) x Dc.
template <typename T>
struct Batch {
  int size = 0;
  Mat<T> fast;
  Mat<T> slow;
  Mat<T> target;
};

template <typename T>
Batch<T> make_batch(const SplitData& split, std::span<const std::size_t> indices);

// Joins a visitor prefix with a child name.
inline std::string join_name(const std::string& prefix, const char* child) {
  return prefix.empty() ? std::string(child) : prefix + "." + child;
}

template <typename P>
std::size_t parameter_count(const P& p) {
  std::size_t n = 0;
  P::visit(p, "", [&](const std::string&, const auto& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename P, typename Scalar>
std::vector<Mat<Scalar>*> parameter_list(P& p) {
  std::vector<Mat<Scalar>*> out;
  P::visit(p, "", [&](const std::string&, Mat<Scalar>& m) { out.push_back(&m); });
  return out;
}

template <typename P>
std::vector<NamedTensor> to_named_tensors(const P& p) {
  std::vector<NamedTensor> out;
  P::visit(p, "", [&](const std::string& name, const auto& m) {
    NamedTensor t{name, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
    t.values.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) t.values[i] = static_cast<float>(m.data()[i]);
    out.push_back(std::move(t));
  });
  return out;
}

// Returns `got` reordered to match `expected`. Throws ConfigError on
// missing, unknown or mis-shaped tensors.
std::vector<const NamedTensor*> match_named_tensors(const std::vector<NamedTensor>& expected,
                                                    const std::vector<NamedTensor>& got);

// Copies tensors into an already-shaped parameter set.
template <typename P>
void assign_named_tensors(P& p, const std::vector<NamedTensor>& tensors) {
  const auto matched = match_named_tensors(to_named_tensors(p), tensors);
  std::size_t i = 0;
  P::visit(p, "", [&](const std::string&, auto& m) {
    using S = typename std::decay_t<decltype(m)>::Scalar;
    const auto& t = *matched[i++];
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<S>(t.values[k]);
  });
}

// Sinusoidal embedding of a diffusion timestep, 1 x d.
template <typename T>
Mat<T> timestep_embedding(int t, int d);

}  // namespace mfm
