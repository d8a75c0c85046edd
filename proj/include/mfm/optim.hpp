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

#include <cmath>
#include <cstdint>
#include <string>

#include "mfm/checkpoint.hpp"
#include "mfm/errors.hpp"
#include "mfm/mapper_common.hpp"

namespace mfm {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// First/second moments shaped like the parameter set P.
template <typename P>
struct OptimizerState {
  P m;
  P v;
  std::uint64_t step = 0;

  static OptimizerState zeros(const P& params) { return {zeros_like(params), zeros_like(params), 0}; }
};

template <typename P>
double global_grad_norm(const P& grads) {
  double sq = 0.0;
  P::visit(grads, "", [&](const std::string&, const auto& g) {
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double x = static_cast<double>(g.data()[i]);
      sq += x * x;
    }
  });
  return std::sqrt(sq);
}

// Scales grads so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename P>
double clip_global_norm(P& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-12);
    P::visit(grads, "", [&](const std::string&, auto& g) {
      using S = typename std::decay_t<decltype(g)>::Scalar;
      g *= static_cast<S>(scale);
    });
  }
  return norm;
}

// Decoupled-weight-decay Adam update, applied in place.
template <typename P>
void adamw_step(P& params, const P& grads, OptimizerState<P>& state, const AdamWConfig& cfg) {
  using S = typename P::Scalar;
  const auto ps = parameter_list<P, S>(params);
  const auto gs = parameter_list<P, S>(const_cast<P&>(grads));
  const auto ms = parameter_list<P, S>(state.m);
  const auto vs = parameter_list<P, S>(state.v);
  if (gs.size() != ps.size() || ms.size() != ps.size() || vs.size() != ps.size()) {
    throw ArgumentError("optimizer: parameter sets differ in structure");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto& p = *ps[k];
    const auto& g = *gs[k];
    auto& m = *ms[k];
    auto& v = *vs[k];
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw ArgumentError("optimizer: shape mismatch in parameter " + std::to_string(k));
    }
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g.data()[i]);
      const double mi = cfg.beta1 * static_cast<double>(m.data()[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v.data()[i]) + (1.0 - cfg.beta2) * gi * gi;
      m.data()[i] = static_cast<S>(mi);
      v.data()[i] = static_cast<S>(vi);
      const double pi = static_cast<double>(p.data()[i]);
      const double np = pi - cfg.lr * ((mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps) + cfg.weight_decay * pi);
      p.data()[i] = static_cast<S>(np);
    }
    if (!p.allFinite()) throw NumericError("optimizer: non-finite parameter update");
  }
}

template <typename P>
OptimizerSnapshot snapshot(const OptimizerState<P>& s) {
  return {s.step, to_named_tensors(s.m), to_named_tensors(s.v)};
}

template <typename P>
OptimizerState<P> restore_optimizer(const P& shape_like, const OptimizerSnapshot& snap) {
  OptimizerState<P> s = OptimizerState<P>::zeros(shape_like);
  assign_named_tensors(s.m, snap.first_moment);
  assign_named_tensors(s.v, snap.second_moment);
  s.step = snap.step;
  return s;
}

}  // namespace mfm
