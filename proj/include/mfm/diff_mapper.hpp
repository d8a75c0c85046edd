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

#include <cstdint>
#include <span>
#include <vector>

#include "mfm/mapper_common.hpp"

namespace mfm {

// Linear-beta DDPM schedule.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
};

DiffusionSchedule make_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

// sqrt(abar_t) * c0 + sqrt(1 - abar_t) * eps.
template <typename T>
Mat<T> q_sample(const Mat<T>& c0, int t, const Mat<T>& eps, const DiffusionSchedule& sched);

// Same blend with an explicit alpha_bar; used for limit checks.
template <typename T>
Mat<T> blend_with_noise(const Mat<T>& c0, double alpha_bar, const Mat<T>& eps);

// Evenly strided timesteps from steps-1 down to 0 (n_steps entries).
std::vector<int> ddim_timesteps(int total_steps, int n_steps);

// Diffusion baseline on the same backbone. Token layout per sample:
//   [visual tokens (T_v); timestep token; noisy targets (T_c); queries (T_c)]
// with bidirectional attention; the noise estimate is read at the query
// positions.
template <typename T>
struct DiffMapperParams {
  using Scalar = T;
  MapperConfig cfg;
  FusionParams<T> fusion;
  nn::Linear<T> visual_in;   // De x d
  nn::Linear<T> noisy_in;    // Dc x d
  nn::Linear<T> time_fc1;    // d x d
  nn::Linear<T> time_fc2;    // d x d
  Mat<T> queries;            // T_c x d
  Mat<T> pos;                // (T_v_max + 1 + 2 T_c) x d
  Backbone<T> backbone;
  nn::Linear<T> head;        // d x Dc

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    FusionParams<T>::visit(self.fusion, join_name(prefix, "fusion"), f);
    nn::Linear<T>::visit(self.visual_in, join_name(prefix, "visual_in"), f);
    nn::Linear<T>::visit(self.noisy_in, join_name(prefix, "noisy_in"), f);
    nn::Linear<T>::visit(self.time_fc1, join_name(prefix, "time_fc1"), f);
    nn::Linear<T>::visit(self.time_fc2, join_name(prefix, "time_fc2"), f);
    f(join_name(prefix, "queries"), self.queries);
    f(join_name(prefix, "pos"), self.pos);
    Backbone<T>::visit(self.backbone, join_name(prefix, "backbone"), f);
    nn::Linear<T>::visit(self.head, join_name(prefix, "head"), f);
  }
};

template <typename T>
DiffMapperParams<T> init_diff_mapper(const MapperConfig& cfg, std::uint64_t seed);

// Noise estimate for noisy targets `noisy` ((B*T_c) x Dc) at per-sample
// timesteps `t`.
template <typename T>
Mat<T> diff_forward(const DiffMapperParams<T>& params, const Batch<T>& batch, const Mat<T>& noisy,
                    std::span<const int> t);

// Epsilon-prediction loss for given timesteps and noise, with exact
// gradients. batch.target holds C_0. `grads` is overwritten.
template <typename T>
T diff_loss_and_grads(const DiffMapperParams<T>& params, const Batch<T>& batch, std::span<const int> t,
                      const Mat<T>& eps, const DiffusionSchedule& sched, DiffMapperParams<T>& grads);

// Draws t ~ U{0..steps-1} per sample, then eps ~ N(0, I), and returns the
// loss with gradients.
template <typename T>
T diff_train_step(const DiffMapperParams<T>& params, const Batch<T>& batch, const DiffusionSchedule& sched,
                  Rng& rng, DiffMapperParams<T>& grads);

// Deterministic DDIM (eta = 0) sampling from Gaussian noise drawn from
// `rng`. Returns (B*T_c) x Dc.
template <typename T>
Mat<T> diff_sample(const DiffMapperParams<T>& params, const Batch<T>& batch, const DiffusionSchedule& sched,
                   int n_steps, Rng& rng);

}  // namespace mfm
