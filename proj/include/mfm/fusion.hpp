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

#include <string>
#include <string_view>

#include "mfm/nn.hpp"
#include "mfm/tensor.hpp"

namespace mfm {

enum class FusionMode {
  kChannelProj,   // replicate slow stream, concat channels, project
  kAdd,           // replicate slow stream, project each branch, sum
  kTimeCat,       // project each branch, concat along time (no alignment)
  kFastOnly,      // fast (timing) stream only
  kSlowOnly,      // replicated slow (semantic) stream only
};

std::string_view to_string(FusionMode mode);
// Accepts channel_proj | add | time_cat | cavp_only | timechat_only.
// Throws ConfigError mentioning "fusion" otherwise.
FusionMode parse_fusion_mode(std::string_view name);

struct FusionConfig {
  int fused_dim = 64;
  FusionMode mode = FusionMode::kChannelProj;
};

// Length of the fused sequence for a given mode.
int fused_length(FusionMode mode, int fast_len, int slow_len);

// out[i] = in[floor(i * T2 / target_len)].
EmbeddingSequence upsample_replicate(const EmbeddingSequence& seq, int target_len);

template <typename T>
Mat<T> upsample_rows(const Mat<T>& x, int target_len) {
  const auto src_len = static_cast<long long>(x.rows());
  Mat<T> out(target_len, x.cols());
  for (int i = 0; i < target_len; ++i) out.row(i) = x.row(static_cast<Eigen::Index>(i * src_len / target_len));
  return out;
}

// Learned projections of the fusion stage. Only the branches used by the
// mode are populated; the others stay empty and carry no parameters.
template <typename T>
struct FusionParams {
  FusionMode mode = FusionMode::kChannelProj;
  nn::Linear<T> fast;  // D1 x De
  nn::Linear<T> slow;  // D2 x De
  nn::Linear<T> cat;   // (D1 + D2) x De

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    if (self.fast.w.size() > 0) nn::Linear<T>::visit(self.fast, prefix + ".fast", f);
    if (self.slow.w.size() > 0) nn::Linear<T>::visit(self.slow, prefix + ".slow", f);
    if (self.cat.w.size() > 0) nn::Linear<T>::visit(self.cat, prefix + ".cat", f);
  }
};

template <typename T>
FusionParams<T> init_fusion(const FusionConfig& cfg, int fast_dim, int slow_dim, double stddev, Rng& rng);

// Batched fusion of `batch` samples. fast: (B*T1) x D1, slow: (B*W) x D2.
// Returns (B*Tv) x De with Tv = fused_length(mode, T1, W).
template <typename T>
struct FusionCache {
  Mat<T> upsampled;  // (B*T1) x D2 where used
  Mat<T> concat;     // (B*T1) x (D1+D2) for channel_proj
};

template <typename T>
Mat<T> fuse_batch(const FusionParams<T>& p, const Mat<T>& fast, const Mat<T>& slow, int batch, FusionCache<T>* cache);

// Accumulates parameter gradients given dL/dVe.
template <typename T>
void fuse_backward(const FusionParams<T>& p, const Mat<T>& fast, const Mat<T>& slow, int batch,
                   const FusionCache<T>& cache, const Mat<T>& dfused, FusionParams<T>& grads);

// Single-sample convenience over EmbeddingSequences; tag `fused`.
EmbeddingSequence fuse(const EmbeddingSequence& fast, const EmbeddingSequence& slow, const FusionParams<float>& p);

}  // namespace mfm
