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


#include "mfm/diff_mapper.hpp"

#include <algorithm>
#include <cmath>

#include "mapper_internal.hpp"
#include "mfm/ar_mapper.hpp"

namespace mfm {
namespace {

using detail::check_batch;
using detail::check_finite_rows;
using detail::VisualCache;
using detail::visual_tokens;

template <typename T>
struct DiffCache {
  VisualCache<T> visual;
  Mat<T> time_in;   // B x d sinusoidal
  Mat<T> time_pre;  // B x d, before GELU
  Mat<T> time_act;  // B x d, after GELU
  Mat<T> noisy;     // (B*T_c) x Dc
  BackboneCache<T> backbone;
  Mat<T> gathered;  // (B*T_c) x d
};

template <typename T>
Mat<T> diff_forward_impl(const DiffMapperParams<T>& p, const Batch<T>& b, const Mat<T>& vis, const Mat<T>& noisy,
                         std::span<const int> t, DiffCache<T>& c, bool keep_cache) {
  const auto& cfg = p.cfg;
  const int B = b.size;
  const int tv = cfg.visual_tokens();
  const int tc = cfg.target_len;
  const int len = tv + 1 + 2 * tc;
  const int d = cfg.d_model;
  if (static_cast<int>(t.size()) != B) throw ArgumentError("need one timestep per batch sample");
  if (noisy.rows() != static_cast<Eigen::Index>(B) * tc || noisy.cols() != cfg.target_dim) {
    throw ArgumentError("noisy target shape does not match the mapper config");
  }

  c.time_in.resize(B, d);
  for (int s = 0; s < B; ++s) c.time_in.row(s) = timestep_embedding<T>(t[s], d).row(0);
  c.time_pre = nn::linear_forward(c.time_in, p.time_fc1);
  c.time_act = nn::gelu_forward(c.time_pre);
  const Mat<T> time_tok = nn::linear_forward(c.time_act, p.time_fc2);
  const Mat<T> noisy_tok = nn::linear_forward(noisy, p.noisy_in);
  if (keep_cache) c.noisy = noisy;

  Mat<T> x(static_cast<Eigen::Index>(B) * len, d);
  for (int s = 0; s < B; ++s) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(s) * len;
    x.block(r0, 0, tv, d) = vis.block(static_cast<Eigen::Index>(s) * tv, 0, tv, d);
    x.row(r0 + tv) = time_tok.row(s);
    x.block(r0 + tv + 1, 0, tc, d) = noisy_tok.block(static_cast<Eigen::Index>(s) * tc, 0, tc, d);
    x.block(r0 + tv + 1 + tc, 0, tc, d) = p.queries;
    x.block(r0, 0, len, d) += p.pos.topRows(len);
  }
  const Mat<T> h = backbone_forward(p.backbone, std::move(x), B, len, false, keep_cache ? &c.backbone : nullptr);
  c.gathered.resize(static_cast<Eigen::Index>(B) * tc, d);
  for (int s = 0; s < B; ++s) {
    c.gathered.block(static_cast<Eigen::Index>(s) * tc, 0, tc, d) =
        h.block(static_cast<Eigen::Index>(s) * len + tv + 1 + tc, 0, tc, d);
  }
  Mat<T> eps_hat = nn::linear_forward(c.gathered, p.head);
  check_finite_rows(eps_hat, tc, "diffusion mapper");
  return eps_hat;
}

}  // namespace

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("diffusion field 'T_diff': must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("diffusion betas: need 0 < beta_start <= beta_end < 1");
  }
  DiffusionSchedule s;
  s.steps = steps;
  s.betas.resize(steps);
  s.alphas.resize(steps);
  s.alpha_bars.resize(steps);
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    s.betas[t] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (steps - 1);
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

template <typename T>
Mat<T> blend_with_noise(const Mat<T>& c0, double alpha_bar, const Mat<T>& eps) {
  if (c0.rows() != eps.rows() || c0.cols() != eps.cols()) throw ArgumentError("q_sample shape mismatch");
  return static_cast<T>(std::sqrt(alpha_bar)) * c0 + static_cast<T>(std::sqrt(1.0 - alpha_bar)) * eps;
}

template <typename T>
Mat<T> q_sample(const Mat<T>& c0, int t, const Mat<T>& eps, const DiffusionSchedule& sched) {
  if (t < 0 || t >= sched.steps) throw ArgumentError("q_sample: timestep out of range");
  return blend_with_noise(c0, sched.alpha_bars[t], eps);
}

std::vector<int> ddim_timesteps(int total_steps, int n_steps) {
  if (n_steps < 1 || n_steps > total_steps) throw ArgumentError("ddim: need 1 <= n_steps <= T_diff");
  std::vector<int> ts(n_steps);
  if (n_steps == 1) {
    ts[0] = total_steps - 1;
    return ts;
  }
  for (int k = 0; k < n_steps; ++k) {
    const long long num = static_cast<long long>(total_steps - 1) * (n_steps - 1 - k);
    // Rounded (T-1) * j / (n-1), descending in k.
    ts[k] = static_cast<int>((2 * num + (n_steps - 1)) / (2LL * (n_steps - 1)));
  }
  return ts;
}

template <typename T>
DiffMapperParams<T> init_diff_mapper(const MapperConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const double std = 0.02;
  DiffMapperParams<T> p;
  p.cfg = cfg;
  p.fusion = init_fusion<T>({cfg.fused_dim, cfg.fusion}, cfg.fast_dim, cfg.slow_dim, std, rng);
  p.visual_in = nn::make_linear<T>(cfg.fused_dim, cfg.d_model, std, rng);
  p.noisy_in = nn::make_linear<T>(cfg.target_dim, cfg.d_model, std, rng);
  p.time_fc1 = nn::make_linear<T>(cfg.d_model, cfg.d_model, std, rng);
  p.time_fc2 = nn::make_linear<T>(cfg.d_model, cfg.d_model, std, rng);
  p.queries = nn::gaussian<T>(cfg.target_len, cfg.d_model, std, rng);
  p.pos = nn::gaussian<T>(cfg.max_visual_tokens + 1 + 2 * cfg.target_len, cfg.d_model, std, rng);
  p.backbone = init_backbone<T>(cfg.backbone(), rng);
  p.head = {Mat<T>::Zero(cfg.d_model, cfg.target_dim), Mat<T>::Zero(1, cfg.target_dim)};
  return p;
}

template <typename T>
Mat<T> diff_forward(const DiffMapperParams<T>& params, const Batch<T>& batch, const Mat<T>& noisy,
                    std::span<const int> t) {
  check_batch(params.cfg, batch, false);
  const Mat<T> vis = visual_tokens(params, batch, nullptr);
  DiffCache<T> cache;
  return diff_forward_impl(params, batch, vis, noisy, t, cache, false);
}

template <typename T>
T diff_loss_and_grads(const DiffMapperParams<T>& p, const Batch<T>& b, std::span<const int> t, const Mat<T>& eps,
                      const DiffusionSchedule& sched, DiffMapperParams<T>& g) {
  const auto& cfg = p.cfg;
  check_batch(cfg, b, true);
  const int B = b.size;
  const int tv = cfg.visual_tokens();
  const int tc = cfg.target_len;
  const int len = tv + 1 + 2 * tc;
  const int d = cfg.d_model;
  if (static_cast<int>(t.size()) != B) throw ArgumentError("need one timestep per batch sample");
  if (eps.rows() != b.target.rows() || eps.cols() != b.target.cols()) throw ArgumentError("eps shape mismatch");

  Mat<T> noisy(b.target.rows(), b.target.cols());
  for (int s = 0; s < B; ++s) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(s) * tc;
    noisy.middleRows(r0, tc) = q_sample<T>(b.target.middleRows(r0, tc), t[s], eps.middleRows(r0, tc), sched);
  }

  g = zeros_like(p);
  DiffCache<T> c;
  const Mat<T> vis = visual_tokens(p, b, &c.visual);
  const Mat<T> eps_hat = diff_forward_impl(p, b, vis, noisy, t, c, true);
  const T loss = sequence_mse(eps, eps_hat, B);
  if (!std::isfinite(static_cast<double>(loss))) throw NumericError("diffusion mapper: non-finite loss");

  const Mat<T> dout = (eps_hat - eps) * (T(2) / static_cast<T>(B * tc));
  const Mat<T> dgathered = nn::linear_backward(c.gathered, p.head, dout, g.head);
  Mat<T> dh = Mat<T>::Zero(static_cast<Eigen::Index>(B) * len, d);
  for (int s = 0; s < B; ++s) {
    dh.block(static_cast<Eigen::Index>(s) * len + tv + 1 + tc, 0, tc, d) =
        dgathered.block(static_cast<Eigen::Index>(s) * tc, 0, tc, d);
  }
  const Mat<T> dx = backbone_backward(p.backbone, c.backbone, dh, g.backbone);

  Mat<T> dvis(static_cast<Eigen::Index>(B) * tv, d);
  Mat<T> dtime(B, d);
  Mat<T> dnoisy(static_cast<Eigen::Index>(B) * tc, d);
  for (int s = 0; s < B; ++s) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(s) * len;
    g.pos.topRows(len) += dx.block(r0, 0, len, d);
    dvis.block(static_cast<Eigen::Index>(s) * tv, 0, tv, d) = dx.block(r0, 0, tv, d);
    dtime.row(s) = dx.row(r0 + tv);
    dnoisy.block(static_cast<Eigen::Index>(s) * tc, 0, tc, d) = dx.block(r0 + tv + 1, 0, tc, d);
    g.queries += dx.block(r0 + tv + 1 + tc, 0, tc, d);
  }
  nn::linear_backward_params(c.noisy, dnoisy, g.noisy_in);
  const Mat<T> dact = nn::linear_backward(c.time_act, p.time_fc2, dtime, g.time_fc2);
  nn::linear_backward_params(c.time_in, nn::gelu_backward(c.time_pre, dact), g.time_fc1);
  detail::visual_backward(p, b, c.visual, dvis, g);
  return loss;
}

template <typename T>
T diff_train_step(const DiffMapperParams<T>& params, const Batch<T>& batch, const DiffusionSchedule& sched, Rng& rng,
                  DiffMapperParams<T>& grads) {
  std::vector<int> t(batch.size);
  for (auto& ts : t) ts = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.steps)));
  Mat<T> eps(batch.target.rows(), batch.target.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<T>(rng.normal());
  return diff_loss_and_grads(params, batch, t, eps, sched, grads);
}

template <typename T>
Mat<T> diff_sample(const DiffMapperParams<T>& params, const Batch<T>& batch, const DiffusionSchedule& sched,
                   int n_steps, Rng& rng) {
  const auto& cfg = params.cfg;
  check_batch(cfg, batch, false);
  const std::vector<int> ts = ddim_timesteps(sched.steps, n_steps);
  const int B = batch.size;
  Mat<T> x(static_cast<Eigen::Index>(B) * cfg.target_len, cfg.target_dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<T>(rng.normal());

  const Mat<T> vis = visual_tokens(params, batch, nullptr);
  DiffCache<T> cache;
  std::vector<int> tb(B);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    std::fill(tb.begin(), tb.end(), t);
    const Mat<T> eps = diff_forward_impl(params, batch, vis, x, tb, cache, false);
    const double ab = sched.alpha_bars[t];
    const double ab_prev = k + 1 < ts.size() ? sched.alpha_bars[ts[k + 1]] : 1.0;
    const Mat<T> x0 = (x - static_cast<T>(std::sqrt(1.0 - ab)) * eps) / static_cast<T>(std::sqrt(ab));
    x = static_cast<T>(std::sqrt(ab_prev)) * x0 + static_cast<T>(std::sqrt(1.0 - ab_prev)) * eps;
  }
  check_finite_rows(x, cfg.target_len, "diffusion sampling");
  return x;
}

#define MFM_INSTANTIATE_DIFF(T)                                                                                  \
  template Mat<T> q_sample<T>(const Mat<T>&, int, const Mat<T>&, const DiffusionSchedule&);                     \
  template Mat<T> blend_with_noise<T>(const Mat<T>&, double, const Mat<T>&);                                    \
  template DiffMapperParams<T> init_diff_mapper<T>(const MapperConfig&, std::uint64_t);                         \
  template Mat<T> diff_forward<T>(const DiffMapperParams<T>&, const Batch<T>&, const Mat<T>&,                   \
                                  std::span<const int>);                                                        \
  template T diff_loss_and_grads<T>(const DiffMapperParams<T>&, const Batch<T>&, std::span<const int>,          \
                                    const Mat<T>&, const DiffusionSchedule&, DiffMapperParams<T>&);             \
  template T diff_train_step<T>(const DiffMapperParams<T>&, const Batch<T>&, const DiffusionSchedule&, Rng&,    \
                                DiffMapperParams<T>&);                                                          \
  template Mat<T> diff_sample<T>(const DiffMapperParams<T>&, const Batch<T>&, const DiffusionSchedule&, int, Rng&);

MFM_INSTANTIATE_DIFF(float)
MFM_INSTANTIATE_DIFF(double)

#undef MFM_INSTANTIATE_DIFF

}  // namespace mfm
