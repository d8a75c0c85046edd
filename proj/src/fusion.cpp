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


#include "mfm/fusion.hpp"

#include "mfm/errors.hpp"

namespace mfm {
namespace {

// Replicates each sample's slow rows up to the fast length.
template <typename T>
Mat<T> upsample_batch(const Mat<T>& slow, int batch, int slow_len, int fast_len) {
  Mat<T> out(static_cast<Eigen::Index>(batch) * fast_len, slow.cols());
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < fast_len; ++i) {
      const long long src = static_cast<long long>(i) * slow_len / fast_len;
      out.row(static_cast<Eigen::Index>(b) * fast_len + i) = slow.row(static_cast<Eigen::Index>(b) * slow_len + src);
    }
  }
  return out;
}

void check_batch_rows(Eigen::Index fast_rows, Eigen::Index slow_rows, int batch) {
  if (batch < 1 || fast_rows % batch != 0 || slow_rows % batch != 0) {
    throw ArgumentError("fusion inputs are not divisible into the batch");
  }
  if (fast_rows / batch < slow_rows / batch) {
    throw ArgumentError("fusion expects the fast stream to be at least as long as the slow stream");
  }
}

}  // namespace

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kChannelProj: return "channel_proj";
    case FusionMode::kAdd: return "add";
    case FusionMode::kTimeCat: return "time_cat";
    case FusionMode::kFastOnly: return "cavp_only";
    case FusionMode::kSlowOnly: return "timechat_only";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(std::string_view name) {
  for (auto m : {FusionMode::kChannelProj, FusionMode::kAdd, FusionMode::kTimeCat, FusionMode::kFastOnly,
                 FusionMode::kSlowOnly}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown fusion mode '" + std::string(name) +
                    "' (expected channel_proj|add|time_cat|cavp_only|timechat_only)");
}

int fused_length(FusionMode mode, int fast_len, int slow_len) {
  return mode == FusionMode::kTimeCat ? fast_len + slow_len : fast_len;
}

EmbeddingSequence upsample_replicate(const EmbeddingSequence& seq, int target_len) {
  if (target_len < seq.length()) {
    throw ArgumentError("upsample_replicate: target length " + std::to_string(target_len) +
                        " is shorter than input length " + std::to_string(seq.length()));
  }
  const double rate = seq.rate_fps() * target_len / seq.length();
  return EmbeddingSequence(upsample_rows(seq.data(), target_len), rate, seq.tag());
}

template <typename T>
FusionParams<T> init_fusion(const FusionConfig& cfg, int fast_dim, int slow_dim, double stddev, Rng& rng) {
  if (cfg.fused_dim < 1) throw ConfigError("fusion field 'De': must be >= 1");
  FusionParams<T> p;
  p.mode = cfg.mode;
  const int de = cfg.fused_dim;
  switch (cfg.mode) {
    case FusionMode::kChannelProj:
      p.cat = nn::make_linear<T>(fast_dim + slow_dim, de, stddev, rng);
      break;
    case FusionMode::kAdd:
    case FusionMode::kTimeCat:
      p.fast = nn::make_linear<T>(fast_dim, de, stddev, rng);
      p.slow = nn::make_linear<T>(slow_dim, de, stddev, rng);
      break;
    case FusionMode::kFastOnly:
      p.fast = nn::make_linear<T>(fast_dim, de, stddev, rng);
      break;
    case FusionMode::kSlowOnly:
      p.slow = nn::make_linear<T>(slow_dim, de, stddev, rng);
      break;
  }
  return p;
}

template <typename T>
Mat<T> fuse_batch(const FusionParams<T>& p, const Mat<T>& fast, const Mat<T>& slow, int batch,
                  FusionCache<T>* cache) {
  check_batch_rows(fast.rows(), slow.rows(), batch);
  const int fast_len = static_cast<int>(fast.rows() / batch);
  const int slow_len = static_cast<int>(slow.rows() / batch);
  FusionCache<T> local;
  FusionCache<T>& c = cache ? *cache : local;
  switch (p.mode) {
    case FusionMode::kChannelProj: {
      if (fast.cols() + slow.cols() != p.cat.in_dim()) throw ArgumentError("channel_proj: input widths mismatch");
      c.upsampled = upsample_batch(slow, batch, slow_len, fast_len);
      c.concat.resize(fast.rows(), fast.cols() + slow.cols());
      c.concat << fast, c.upsampled;
      return nn::linear_forward(c.concat, p.cat);
    }
    case FusionMode::kAdd: {
      if (fast.cols() != p.fast.in_dim() || slow.cols() != p.slow.in_dim()) {
        throw ArgumentError("add: input widths mismatch");
      }
      c.upsampled = upsample_batch(slow, batch, slow_len, fast_len);
      Mat<T> out = nn::linear_forward(fast, p.fast);
      out += nn::linear_forward(c.upsampled, p.slow);
      return out;
    }
    case FusionMode::kTimeCat: {
      if (fast.cols() != p.fast.in_dim() || slow.cols() != p.slow.in_dim()) {
        throw ArgumentError("time_cat: input widths mismatch");
      }
      const Mat<T> a = nn::linear_forward(fast, p.fast);
      const Mat<T> s = nn::linear_forward(slow, p.slow);
      const int len = fast_len + slow_len;
      Mat<T> out(static_cast<Eigen::Index>(batch) * len, a.cols());
      for (int b = 0; b < batch; ++b) {
        out.block(static_cast<Eigen::Index>(b) * len, 0, fast_len, a.cols()) =
            a.block(static_cast<Eigen::Index>(b) * fast_len, 0, fast_len, a.cols());
        out.block(static_cast<Eigen::Index>(b) * len + fast_len, 0, slow_len, a.cols()) =
            s.block(static_cast<Eigen::Index>(b) * slow_len, 0, slow_len, a.cols());
      }
      return out;
    }
    case FusionMode::kFastOnly:
      if (fast.cols() != p.fast.in_dim()) throw ArgumentError("cavp_only: input width mismatch");
      return nn::linear_forward(fast, p.fast);
    case FusionMode::kSlowOnly:
      if (slow.cols() != p.slow.in_dim()) throw ArgumentError("timechat_only: input width mismatch");
      c.upsampled = upsample_batch(slow, batch, slow_len, fast_len);
      return nn::linear_forward(c.upsampled, p.slow);
  }
  throw ArgumentError("unknown fusion mode");
}

template <typename T>
void fuse_backward(const FusionParams<T>& p, const Mat<T>& fast, const Mat<T>& slow, int batch,
                   const FusionCache<T>& c, const Mat<T>& dfused, FusionParams<T>& g) {
  const int fast_len = static_cast<int>(fast.rows() / batch);
  const int slow_len = static_cast<int>(slow.rows() / batch);
  switch (p.mode) {
    case FusionMode::kChannelProj:
      nn::linear_backward_params(c.concat, dfused, g.cat);
      return;
    case FusionMode::kAdd:
      nn::linear_backward_params(fast, dfused, g.fast);
      nn::linear_backward_params(c.upsampled, dfused, g.slow);
      return;
    case FusionMode::kTimeCat: {
      const int len = fast_len + slow_len;
      Mat<T> da(fast.rows(), dfused.cols());
      Mat<T> ds(slow.rows(), dfused.cols());
      for (int b = 0; b < batch; ++b) {
        da.block(static_cast<Eigen::Index>(b) * fast_len, 0, fast_len, da.cols()) =
            dfused.block(static_cast<Eigen::Index>(b) * len, 0, fast_len, da.cols());
        ds.block(static_cast<Eigen::Index>(b) * slow_len, 0, slow_len, ds.cols()) =
            dfused.block(static_cast<Eigen::Index>(b) * len + fast_len, 0, slow_len, ds.cols());
      }
      nn::linear_backward_params(fast, da, g.fast);
      nn::linear_backward_params(slow, ds, g.slow);
      return;
    }
    case FusionMode::kFastOnly:
      nn::linear_backward_params(fast, dfused, g.fast);
      return;
    case FusionMode::kSlowOnly:
      nn::linear_backward_params(c.upsampled, dfused, g.slow);
      return;
  }
}

EmbeddingSequence fuse(const EmbeddingSequence& fast, const EmbeddingSequence& slow, const FusionParams<float>& p) {
  MatrixF out = fuse_batch<float>(p, fast.data(), slow.data(), 1, nullptr);
  return EmbeddingSequence(std::move(out), fast.rate_fps(), SeqTag::kFused);
}

template FusionParams<float> init_fusion<float>(const FusionConfig&, int, int, double, Rng&);
template FusionParams<double> init_fusion<double>(const FusionConfig&, int, int, double, Rng&);
template Mat<float> fuse_batch<float>(const FusionParams<float>&, const Mat<float>&, const Mat<float>&, int,
                                      FusionCache<float>*);
template Mat<double> fuse_batch<double>(const FusionParams<double>&, const Mat<double>&, const Mat<double>&, int,
                                        FusionCache<double>*);
template void fuse_backward<float>(const FusionParams<float>&, const Mat<float>&, const Mat<float>&, int,
                                   const FusionCache<float>&, const Mat<float>&, FusionParams<float>&);
template void fuse_backward<double>(const FusionParams<double>&, const Mat<double>&, const Mat<double>&, int,
                                    const FusionCache<double>&, const Mat<double>&, FusionParams<double>&);

}  // namespace mfm
