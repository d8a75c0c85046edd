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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "mfm/ar_mapper.hpp"
#include "mfm/dataset.hpp"
#include "mfm/diff_mapper.hpp"

namespace mfm::testing {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mfm_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Tiny geometry: T1 = 4, W = T_c = 2, d_model = 8, one layer.
inline MapperConfig tiny_config(FusionMode fusion = FusionMode::kChannelProj) {
  MapperConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.mlp_ratio = 2;
  c.target_len = 2;
  c.fused_dim = 6;
  c.target_dim = 4;
  c.max_visual_tokens = 8;
  c.fusion = fusion;
  c.fast_dim = 3;
  c.slow_dim = 5;
  c.fast_len = 4;
  c.slow_len = 2;
  return c;
}

template <typename T>
Batch<T> random_batch(const MapperConfig& c, int size, std::uint64_t seed) {
  Rng rng(seed);
  Batch<T> b;
  b.size = size;
  b.fast = nn::gaussian<T>(size * c.fast_len, c.fast_dim, 1.0, rng);
  b.slow = nn::gaussian<T>(size * c.slow_len, c.slow_dim, 1.0, rng);
  b.target = nn::gaussian<T>(size * c.target_len, c.target_dim, 1.0, rng);
  return b;
}

// Overwrites every parameter with N(0, stddev^2) draws; LN gains get +1.
template <typename P>
void randomize(P& p, std::uint64_t seed, double stddev = 0.3) {
  Rng rng(seed);
  P::visit(p, "", [&](const std::string& name, auto& m) {
    const bool gain = name.size() > 6 && name.compare(name.size() - 6, 6, ".gamma") == 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<typename std::decay_t<decltype(m)>::Scalar>((gain ? 1.0 : 0.0) + stddev * rng.normal());
    }
  });
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Central differences on every scalar of `params` against `grads`.
// rel = |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is zero (key biases, for one) from scoring finite-difference
// roundoff, which sits near 1e-11 at h = 1e-4.
template <typename P>
GradCheck check_gradients(P params, const P& grads, const std::function<double(const P&)>& loss, double h = 1e-4,
                          double floor = 1e-6) {
  GradCheck out;
  std::vector<std::pair<std::string, const Mat<double>*>> g;
  P::visit(grads, "", [&](const std::string& n, const Mat<double>& m) { g.emplace_back(n, &m); });
  std::size_t k = 0;
  std::vector<std::pair<std::string, Mat<double>*>> ps;
  P::visit(params, "", [&](const std::string& n, Mat<double>& m) { ps.emplace_back(n, &m); });
  for (auto& [name, m] : ps) {
    const Mat<double>& gm = *g[k++].second;
    for (Eigen::Index i = 0; i < m->size(); ++i) {
      const double orig = m->data()[i];
      m->data()[i] = orig + h;
      const double lp = loss(params);
      m->data()[i] = orig - h;
      const double lm = loss(params);
      m->data()[i] = orig;
      const double num = (lp - lm) / (2 * h);
      const double ana = gm.data()[i];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), floor});
      ++out.checked;
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace mfm::testing
