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

#include "mfm/mapper_common.hpp"

namespace mfm {

// Decoder-only transformer that regresses the target sequence one step at a
// time. Token layout per sample:
//   [visual tokens (T_v); bos; target tokens c_0 .. c_{T_c-2}]
// under a causal mask; the prediction for c_i is read at position T_v + i.
template <typename T>
struct MapperParams {
  using Scalar = T;
  MapperConfig cfg;
  FusionParams<T> fusion;
  nn::Linear<T> visual_in;  // De x d_model
  nn::Linear<T> target_in;  // Dc x d_model
  Mat<T> bos;               // 1 x d_model
  Mat<T> pos;               // (T_v_max + 1 + T_c) x d_model
  Backbone<T> backbone;
  nn::Linear<T> head;       // d_model x Dc

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    FusionParams<T>::visit(self.fusion, join_name(prefix, "fusion"), f);
    nn::Linear<T>::visit(self.visual_in, join_name(prefix, "visual_in"), f);
    nn::Linear<T>::visit(self.target_in, join_name(prefix, "target_in"), f);
    f(join_name(prefix, "bos"), self.bos);
    f(join_name(prefix, "pos"), self.pos);
    Backbone<T>::visit(self.backbone, join_name(prefix, "backbone"), f);
    nn::Linear<T>::visit(self.head, join_name(prefix, "head"), f);
  }
};

// Gaussian init (std 0.02), residual projections scaled by 1/sqrt(2 L),
// zero biases and a zero output head. Deterministic in `seed`.
template <typename T>
MapperParams<T> init_mapper(const MapperConfig& cfg, std::uint64_t seed);

template <typename T>
struct MapperOutput {
  Mat<T> pred;  // (B*T_c) x Dc
  T loss = 0;   // mean over batch of (1/T_c) sum_i ||c_i - c_hat_i||^2
};

// Per-sample sequence MSE averaged over the batch.
template <typename T>
T sequence_mse(const Mat<T>& target, const Mat<T>& pred, int batch);

template <typename T>
MapperOutput<T> forward_teacher_forced(const MapperParams<T>& params, const Batch<T>& batch);

// Next-step prediction c_hat_i given a prefix of i target rows per sample
// (prefix is (B*i) x Dc; i may be 0). Returns B x Dc.
template <typename T>
Mat<T> predict_step(const MapperParams<T>& params, const Batch<T>& batch, const Mat<T>& prefix, int step);

// Greedy continuous decoding, feeding each prediction back in.
// Returns (B*T_c) x Dc. batch.target is ignored.
template <typename T>
Mat<T> generate(const MapperParams<T>& params, const Batch<T>& batch);

// Teacher-forced loss and exact gradients for every parameter. `grads` is
// overwritten.
template <typename T>
T loss_and_grads(const MapperParams<T>& params, const Batch<T>& batch, MapperParams<T>& grads);

}  // namespace mfm
