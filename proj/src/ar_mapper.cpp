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


#include "mfm/ar_mapper.hpp"

#include "mapper_internal.hpp"

namespace mfm {
namespace {

using detail::check_batch;
using detail::check_finite_rows;
using detail::VisualCache;
using detail::visual_tokens;

template <typename T>
struct ArCache {
  VisualCache<T> visual;
  Mat<T> prefix_inputs;  // (B*(T_c-1)) x Dc
  BackboneCache<T> backbone;
  Mat<T> gathered;       // (B*T_c) x d
};

// [visual; bos; prefix tokens] + positions, for each sample.
template <typename T>
Mat<T> assemble(const MapperParams<T>& p, const Mat<T>& vis, const Mat<T>& prefix_tokens, int batch, int n_prefix) {
  const int tv = static_cast<int>(vis.rows() / batch);
  const int len = tv + 1 + n_prefix;
  const auto d = p.bos.cols();
  Mat<T> x(static_cast<Eigen::Index>(batch) * len, d);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * len;
    x.block(r0, 0, tv, d) = vis.block(static_cast<Eigen::Index>(b) * tv, 0, tv, d);
    x.row(r0 + tv) = p.bos.row(0);
    if (n_prefix > 0) {
      x.block(r0 + tv + 1, 0, n_prefix, d) = prefix_tokens.block(static_cast<Eigen::Index>(b) * n_prefix, 0, n_prefix, d);
    }
    x.block(r0, 0, len, d) += p.pos.topRows(len);
  }
  return x;
}

template <typename T>
Mat<T> ar_forward(const MapperParams<T>& p, const Batch<T>& b, ArCache<T>& c, bool keep_cache) {
  const auto& cfg = p.cfg;
  check_batch(cfg, b, true);
  const int B = b.size;
  const int tv = cfg.visual_tokens();
  const int tc = cfg.target_len;
  const int len = tv + tc;
  const int d = cfg.d_model;

  Mat<T> vis = visual_tokens(p, b, keep_cache ? &c.visual : nullptr);
  c.prefix_inputs.resize(static_cast<Eigen::Index>(B) * (tc - 1), cfg.target_dim);
  for (int s = 0; s < B; ++s) {
    for (int i = 0; i + 1 < tc; ++i) {
      c.prefix_inputs.row(static_cast<Eigen::Index>(s) * (tc - 1) + i) =
          b.target.row(static_cast<Eigen::Index>(s) * tc + i);
    }
  }
  Mat<T> prefix_tokens = tc > 1 ? nn::linear_forward(c.prefix_inputs, p.target_in) : Mat<T>(0, d);
  Mat<T> x = assemble(p, vis, prefix_tokens, B, tc - 1);
  Mat<T> h = backbone_forward(p.backbone, std::move(x), B, len, true, keep_cache ? &c.backbone : nullptr);
  c.gathered.resize(static_cast<Eigen::Index>(B) * tc, d);
  for (int s = 0; s < B; ++s) {
    c.gathered.block(static_cast<Eigen::Index>(s) * tc, 0, tc, d) =
        h.block(static_cast<Eigen::Index>(s) * len + tv, 0, tc, d);
  }
  Mat<T> pred = nn::linear_forward(c.gathered, p.head);
  check_finite_rows(pred, tc, "ar mapper");
  return pred;
}

// Prediction at the last position of [visual; bos; prefix] for each sample.
template <typename T>
Mat<T> step_from_tokens(const MapperParams<T>& p, const Mat<T>& vis, const Mat<T>& prefix, int batch, int step) {
  const auto& cfg = p.cfg;
  const int tv = cfg.visual_tokens();
  const int len = tv + 1 + step;
  if (prefix.rows() != static_cast<Eigen::Index>(batch) * step) throw ArgumentError("prefix rows != batch * step");
  Mat<T> prefix_tokens = step > 0 ? nn::linear_forward(prefix, p.target_in) : Mat<T>(0, cfg.d_model);
  Mat<T> x = assemble(p, vis, prefix_tokens, batch, step);
  Mat<T> h = backbone_forward(p.backbone, std::move(x), batch, len, true, nullptr);
  Mat<T> last(batch, cfg.d_model);
  for (int s = 0; s < batch; ++s) last.row(s) = h.row(static_cast<Eigen::Index>(s) * len + len - 1);
  Mat<T> out = nn::linear_forward(last, p.head);
  check_finite_rows(out, 1, "ar mapper decode");
  return out;
}

}  // namespace

template <typename T>
MapperParams<T> init_mapper(const MapperConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const double std = 0.02;
  MapperParams<T> p;
  p.cfg = cfg;
  p.fusion = init_fusion<T>({cfg.fused_dim, cfg.fusion}, cfg.fast_dim, cfg.slow_dim, std, rng);
  p.visual_in = nn::make_linear<T>(cfg.fused_dim, cfg.d_model, std, rng);
  p.target_in = nn::make_linear<T>(cfg.target_dim, cfg.d_model, std, rng);
  p.bos = nn::gaussian<T>(1, cfg.d_model, std, rng);
  p.pos = nn::gaussian<T>(cfg.max_visual_tokens + 1 + cfg.target_len, cfg.d_model, std, rng);
  p.backbone = init_backbone<T>(cfg.backbone(), rng);
  p.head = {Mat<T>::Zero(cfg.d_model, cfg.target_dim), Mat<T>::Zero(1, cfg.target_dim)};
  return p;
}

template <typename T>
T sequence_mse(const Mat<T>& target, const Mat<T>& pred, int batch) {
  if (target.rows() != pred.rows() || target.cols() != pred.cols()) throw ArgumentError("mse shape mismatch");
  if (batch < 1 || target.rows() % batch != 0) throw ArgumentError("mse rows not divisible by batch");
  const T tc = static_cast<T>(target.rows() / batch);
  return (target - pred).squaredNorm() / (tc * static_cast<T>(batch));
}

template <typename T>
MapperOutput<T> forward_teacher_forced(const MapperParams<T>& params, const Batch<T>& batch) {
  ArCache<T> cache;
  MapperOutput<T> out;
  out.pred = ar_forward(params, batch, cache, false);
  out.loss = sequence_mse(batch.target, out.pred, batch.size);
  return out;
}

template <typename T>
Mat<T> predict_step(const MapperParams<T>& params, const Batch<T>& batch, const Mat<T>& prefix, int step) {
  check_batch(params.cfg, batch, false);
  if (step < 0 || step >= params.cfg.target_len) throw ArgumentError("decode step out of range");
  const Mat<T> vis = visual_tokens(params, batch, nullptr);
  return step_from_tokens(params, vis, prefix, batch.size, step);
}

template <typename T>
Mat<T> generate(const MapperParams<T>& params, const Batch<T>& batch) {
  check_batch(params.cfg, batch, false);
  const int B = batch.size;
  const int tc = params.cfg.target_len;
  const Mat<T> vis = visual_tokens(params, batch, nullptr);
  Mat<T> out(static_cast<Eigen::Index>(B) * tc, params.cfg.target_dim);
  for (int i = 0; i < tc; ++i) {
    // Prefix: rows 0..i-1 of each sample's decoded output.
    Mat<T> prefix(static_cast<Eigen::Index>(B) * i, params.cfg.target_dim);
    for (int s = 0; s < B; ++s) {
      if (i > 0) prefix.block(static_cast<Eigen::Index>(s) * i, 0, i, prefix.cols()) = out.block(static_cast<Eigen::Index>(s) * tc, 0, i, out.cols());
    }
    const Mat<T> next = step_from_tokens(params, vis, prefix, B, i);
    for (int s = 0; s < B; ++s) out.row(static_cast<Eigen::Index>(s) * tc + i) = next.row(s);
  }
  return out;
}

template <typename T>
T loss_and_grads(const MapperParams<T>& p, const Batch<T>& b, MapperParams<T>& g) {
  const auto& cfg = p.cfg;
  g = zeros_like(p);
  ArCache<T> c;
  const Mat<T> pred = ar_forward(p, b, c, true);
  const T loss = sequence_mse(b.target, pred, b.size);
  if (!std::isfinite(static_cast<double>(loss))) throw NumericError("ar mapper: non-finite loss");

  const int B = b.size;
  const int tv = cfg.visual_tokens();
  const int tc = cfg.target_len;
  const int len = tv + tc;
  const int d = cfg.d_model;

  const Mat<T> dpred = (pred - b.target) * (T(2) / static_cast<T>(B * tc));
  const Mat<T> dgathered = nn::linear_backward(c.gathered, p.head, dpred, g.head);
  Mat<T> dh = Mat<T>::Zero(static_cast<Eigen::Index>(B) * len, d);
  for (int s = 0; s < B; ++s) {
    dh.block(static_cast<Eigen::Index>(s) * len + tv, 0, tc, d) = dgathered.block(static_cast<Eigen::Index>(s) * tc, 0, tc, d);
  }
  const Mat<T> dx = backbone_backward(p.backbone, c.backbone, dh, g.backbone);

  Mat<T> dvis(static_cast<Eigen::Index>(B) * tv, d);
  Mat<T> dprefix(static_cast<Eigen::Index>(B) * (tc - 1), d);
  for (int s = 0; s < B; ++s) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(s) * len;
    g.pos.topRows(len) += dx.block(r0, 0, len, d);
    dvis.block(static_cast<Eigen::Index>(s) * tv, 0, tv, d) = dx.block(r0, 0, tv, d);
    g.bos.row(0) += dx.row(r0 + tv);
    if (tc > 1) dprefix.block(static_cast<Eigen::Index>(s) * (tc - 1), 0, tc - 1, d) = dx.block(r0 + tv + 1, 0, tc - 1, d);
  }
  if (tc > 1) nn::linear_backward_params(c.prefix_inputs, dprefix, g.target_in);
  detail::visual_backward(p, b, c.visual, dvis, g);
  return loss;
}

#define MFM_INSTANTIATE_AR(T)                                                                    \
  template MapperParams<T> init_mapper<T>(const MapperConfig&, std::uint64_t);                  \
  template T sequence_mse<T>(const Mat<T>&, const Mat<T>&, int);                                \
  template MapperOutput<T> forward_teacher_forced<T>(const MapperParams<T>&, const Batch<T>&);  \
  template Mat<T> predict_step<T>(const MapperParams<T>&, const Batch<T>&, const Mat<T>&, int); \
  template Mat<T> generate<T>(const MapperParams<T>&, const Batch<T>&);                         \
  template T loss_and_grads<T>(const MapperParams<T>&, const Batch<T>&, MapperParams<T>&);

MFM_INSTANTIATE_AR(float)
MFM_INSTANTIATE_AR(double)

#undef MFM_INSTANTIATE_AR

}  // namespace mfm
