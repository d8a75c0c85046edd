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

// Pieces shared by the autoregressive and diffusion mappers.

#include <string>
#include <type_traits>

#include "mfm/errors.hpp"
#include "mfm/mapper_common.hpp"

namespace mfm::detail {

template <typename T>
struct VisualCache {
  FusionCache<T> fusion;
  Mat<T> fused;
};

template <typename T>
void check_batch(const MapperConfig& cfg, const Batch<T>& b, bool need_target) {
  const Eigen::Index B = b.size;
  if (B < 1) throw ArgumentError("empty batch");
  if (b.fast.rows() != B * cfg.fast_len || b.fast.cols() != cfg.fast_dim) {
    throw ArgumentError("fast stream batch shape does not match the mapper config");
  }
  if (b.slow.rows() != B * cfg.slow_len || b.slow.cols() != cfg.slow_dim) {
    throw ArgumentError("slow stream batch shape does not match the mapper config");
  }
  if (need_target && (b.target.rows() != B * cfg.target_len || b.target.cols() != cfg.target_dim)) {
    throw ArgumentError("target batch shape does not match the mapper config");
  }
}

// Fusion followed by the visual input projection: (B*T_v) x d.
template <typename P, typename T>
Mat<T> visual_tokens(const P& p, const Batch<T>& b, std::type_identity_t<VisualCache<T>>* cache) {
  FusionCache<T> local;
  Mat<T> fused = fuse_batch(p.fusion, b.fast, b.slow, b.size, cache ? &cache->fusion : &local);
  Mat<T> tokens = nn::linear_forward(fused, p.visual_in);
  if (cache) cache->fused = std::move(fused);
  return tokens;
}

template <typename P, typename T>
void visual_backward(const P& p, const Batch<T>& b, const VisualCache<T>& cache, const Mat<T>& dvis, P& g) {
  const Mat<T> dfused = nn::linear_backward(cache.fused, p.visual_in, dvis, g.visual_in);
  fuse_backward(p.fusion, b.fast, b.slow, b.size, cache.fusion, dfused, g.fusion);
}

template <typename T>
void check_finite_rows(const Mat<T>& pred, int rows_per_sample, const char* what) {
  if (pred.allFinite()) return;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    if (!pred.row(r).allFinite()) {
      throw NumericError(std::string(what) + ": non-finite output for batch sample " +
                         std::to_string(r / rows_per_sample));
    }
  }
}

}  // namespace mfm::detail
