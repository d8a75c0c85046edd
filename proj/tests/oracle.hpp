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

// Straight-line reference forward passes. One sample at a time, one token
// at a time, plain loops; shares no code with the library's batched path.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mfm/ar_mapper.hpp"
#include "mfm/diff_mapper.hpp"

namespace mfm::oracle {

using Vec = Eigen::VectorXd;
using Seq = std::vector<Vec>;

inline Vec affine(const nn::Linear<double>& l, const Vec& x) {
  Vec y(l.w.cols());
  for (Eigen::Index o = 0; o < l.w.cols(); ++o) {
    double s = l.b(0, o);
    for (Eigen::Index i = 0; i < l.w.rows(); ++i) s += x(i) * l.w(i, o);
    y(o) = s;
  }
  return y;
}

inline Vec layer_norm(const nn::LayerNorm<double>& ln, const Vec& x) {
  const double n = static_cast<double>(x.size());
  double mean = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) mean += x(i);
  mean /= n;
  double var = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) var += (x(i) - mean) * (x(i) - mean);
  var /= n;
  Vec y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y(i) = (x(i) - mean) / std::sqrt(var + 1e-5) * ln.gamma(0, i) + ln.beta(0, i);
  }
  return y;
}

inline double gelu(double v) {
  return 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
}

inline Seq rows(const Mat<double>& m, Eigen::Index first, Eigen::Index count) {
  Seq s;
  for (Eigen::Index r = first; r < first + count; ++r) s.push_back(m.row(r).transpose());
  return s;
}

inline Seq fuse(const FusionParams<double>& p, const Seq& fast, const Seq& slow) {
  const std::size_t t1 = fast.size();
  const std::size_t w = slow.size();
  auto up = [&](std::size_t i) { return slow[i * w / t1]; };
  Seq out;
  switch (p.mode) {
    case FusionMode::kChannelProj:
      for (std::size_t i = 0; i < t1; ++i) {
        Vec cat(fast[i].size() + slow[0].size());
        cat << fast[i], up(i);
        out.push_back(affine(p.cat, cat));
      }
      break;
    case FusionMode::kAdd:
      for (std::size_t i = 0; i < t1; ++i) out.push_back(affine(p.fast, fast[i]) + affine(p.slow, up(i)));
      break;
    case FusionMode::kTimeCat:
      for (std::size_t i = 0; i < t1; ++i) out.push_back(affine(p.fast, fast[i]));
      for (std::size_t i = 0; i < w; ++i) out.push_back(affine(p.slow, slow[i]));
      break;
    case FusionMode::kFastOnly:
      for (std::size_t i = 0; i < t1; ++i) out.push_back(affine(p.fast, fast[i]));
      break;
    case FusionMode::kSlowOnly:
      for (std::size_t i = 0; i < t1; ++i) out.push_back(affine(p.slow, up(i)));
      break;
  }
  return out;
}

inline Seq backbone(const Backbone<double>& bb, Seq x, bool causal) {
  const std::size_t n = x.size();
  for (const auto& blk : bb.blocks) {
    const Eigen::Index d = x[0].size();
    const int heads = bb.n_heads;
    const Eigen::Index dh = d / heads;
    Seq q(n), k(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec qkv = affine(blk.qkv, layer_norm(blk.ln1, x[i]));
      q[i] = qkv.segment(0, d);
      k[i] = qkv.segment(d, d);
      v[i] = qkv.segment(2 * d, d);
    }
    Seq att(n, Vec::Zero(d));
    for (std::size_t i = 0; i < n; ++i) {
      for (int h = 0; h < heads; ++h) {
        const std::size_t last = causal ? i : n - 1;
        std::vector<double> s(last + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= last; ++j) {
          double dot = 0;
          for (Eigen::Index c = 0; c < dh; ++c) dot += q[i](h * dh + c) * k[j](h * dh + c);
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& e : s) {
          e = std::exp(e - mx);
          z += e;
        }
        for (std::size_t j = 0; j <= last; ++j) {
          for (Eigen::Index c = 0; c < dh; ++c) att[i](h * dh + c) += s[j] / z * v[j](h * dh + c);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += affine(blk.attn_out, att[i]);
      Vec hdn = affine(blk.fc, layer_norm(blk.ln2, x[i]));
      for (Eigen::Index c = 0; c < hdn.size(); ++c) hdn(c) = gelu(hdn(c));
      x[i] += affine(blk.proj, hdn);
    }
  }
  for (auto& t : x) t = layer_norm(bb.ln_f, t);
  return x;
}

// Teacher-forced AR predictions for sample s: T_c x Dc.
inline Mat<double> ar_forward(const MapperParams<double>& p, const Batch<double>& b, int s) {
  const auto& c = p.cfg;
  const Seq fused = fuse(p.fusion, rows(b.fast, s * c.fast_len, c.fast_len), rows(b.slow, s * c.slow_len, c.slow_len));
  Seq tokens;
  for (const auto& f : fused) tokens.push_back(affine(p.visual_in, f));
  tokens.push_back(p.bos.row(0).transpose());
  for (int i = 0; i + 1 < c.target_len; ++i) {
    tokens.push_back(affine(p.target_in, b.target.row(s * c.target_len + i).transpose()));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] += p.pos.row(static_cast<Eigen::Index>(i)).transpose();
  const Seq h = backbone(p.backbone, tokens, true);
  Mat<double> out(c.target_len, c.target_dim);
  for (int i = 0; i < c.target_len; ++i) out.row(i) = affine(p.head, h[fused.size() + i]).transpose();
  return out;
}

inline Vec timestep_embedding(int t, int d) {
  Vec e = Vec::Zero(d);
  const int half = d / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / half);
    e(k) = std::sin(t * freq);
    e(half + k) = std::cos(t * freq);
  }
  return e;
}

// Diffusion noise estimate for sample s given its noisy rows and timestep.
inline Mat<double> diff_forward(const DiffMapperParams<double>& p, const Batch<double>& b, int s,
                                const Mat<double>& noisy, int t) {
  const auto& c = p.cfg;
  const Seq fused = fuse(p.fusion, rows(b.fast, s * c.fast_len, c.fast_len), rows(b.slow, s * c.slow_len, c.slow_len));
  Seq tokens;
  for (const auto& f : fused) tokens.push_back(affine(p.visual_in, f));
  Vec te = affine(p.time_fc1, timestep_embedding(t, c.d_model));
  for (Eigen::Index i = 0; i < te.size(); ++i) te(i) = gelu(te(i));
  tokens.push_back(affine(p.time_fc2, te));
  for (int i = 0; i < c.target_len; ++i) tokens.push_back(affine(p.noisy_in, noisy.row(i).transpose()));
  for (int i = 0; i < c.target_len; ++i) tokens.push_back(p.queries.row(i).transpose());
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] += p.pos.row(static_cast<Eigen::Index>(i)).transpose();
  const Seq h = backbone(p.backbone, tokens, false);
  Mat<double> out(c.target_len, c.target_dim);
  const std::size_t q0 = fused.size() + 1 + c.target_len;
  for (int i = 0; i < c.target_len; ++i) out.row(i) = affine(p.head, h[q0 + i]).transpose();
  return out;
}

}  // namespace mfm::oracle
