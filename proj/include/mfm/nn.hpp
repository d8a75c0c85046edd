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

// Dense layers with explicit forward/backward passes. Activations are stacked
// row-major matrices: one row per token, sequences of equal length laid out
// back to back. Backward functions accumulate into parameter gradients.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include "mfm/rng.hpp"
#include "mfm/tensor.hpp"

namespace mfm::nn {

template <typename T>
struct Linear {
  Mat<T> w;  // in x out
  Mat<T> b;  // 1 x out

  int in_dim() const { return static_cast<int>(w.rows()); }
  int out_dim() const { return static_cast<int>(w.cols()); }

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + ".w", self.w);
    f(prefix + ".b", self.b);
  }
};

template <typename T>
struct LayerNorm {
  Mat<T> gamma;  // 1 x d
  Mat<T> beta;   // 1 x d

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + ".gamma", self.gamma);
    f(prefix + ".beta", self.beta);
  }
};

template <typename T>
Mat<T> gaussian(int rows, int cols, double stddev, Rng& rng) {
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * rng.normal());
  return m;
}

template <typename T>
Linear<T> make_linear(int in, int out, double stddev, Rng& rng) {
  return {gaussian<T>(in, out, stddev, rng), Mat<T>::Zero(1, out)};
}

template <typename T>
LayerNorm<T> make_layer_norm(int d) {
  return {Mat<T>::Ones(1, d), Mat<T>::Zero(1, d)};
}

// ---------------------------------------------------------------- linear

template <typename T>
Mat<T> linear_forward(const Mat<T>& x, const Linear<T>& p) {
  Mat<T> y(x.rows(), p.w.cols());
  y.noalias() = x * p.w;
  y.rowwise() += p.b.row(0);
  return y;
}

// Returns dL/dx.
template <typename T>
Mat<T> linear_backward(const Mat<T>& x, const Linear<T>& p, const Mat<T>& dy, Linear<T>& g) {
  g.w.noalias() += x.transpose() * dy;
  g.b += dy.colwise().sum();
  Mat<T> dx(dy.rows(), p.w.rows());
  dx.noalias() = dy * p.w.transpose();
  return dx;
}

// Gradient w.r.t. parameters only.
template <typename T>
void linear_backward_params(const Mat<T>& x, const Mat<T>& dy, Linear<T>& g) {
  g.w.noalias() += x.transpose() * dy;
  g.b += dy.colwise().sum();
}

// ------------------------------------------------------------ layer norm

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerNormCache {
  Mat<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <typename T>
Mat<T> layer_norm_forward(const Mat<T>& x, const LayerNorm<T>& p, LayerNormCache<T>* cache) {
  const Eigen::Index n = x.rows();
  const auto d = static_cast<T>(x.cols());
  Mat<T> xhat(x.rows(), x.cols());
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).sum() / d;
    const T var = (x.row(i).array() - mean).square().sum() / d;
    rstd(i) = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  Mat<T> y = (xhat.array().rowwise() * p.gamma.row(0).array()).rowwise() + p.beta.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const LayerNormCache<T>& c, const LayerNorm<T>& p, const Mat<T>& dy, LayerNorm<T>& g) {
  g.gamma += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g.beta += dy.colwise().sum();
  const Mat<T> dxhat = dy.array().rowwise() * p.gamma.row(0).array();
  const auto d = static_cast<T>(dy.cols());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T mean_d = dxhat.row(i).sum() / d;
    const T mean_dx = dxhat.row(i).dot(c.xhat.row(i)) / d;
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - mean_d - c.xhat.row(i).array() * mean_dx);
  }
  return dx;
}

// ------------------------------------------------------------------ GELU

// tanh approximation, as in GPT-2.
template <typename T>
Mat<T> gelu_forward(const Mat<T>& x) {
  const T k = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T c = static_cast<T>(0.044715);
  const auto v = x.array();
  Mat<T> y = (T(0.5) * v * (T(1) + (k * (v + c * v.cube())).tanh())).matrix();
  return y;
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy) {
  const T k = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T c = static_cast<T>(0.044715);
  const auto v = x.array();
  const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> th = (k * (v + c * v.cube())).tanh();
  Mat<T> dx = (dy.array() * (T(0.5) * (T(1) + th) +
                             T(0.5) * v * (T(1) - th.square()) * k * (T(1) + T(3) * c * v.square())))
                  .matrix();
  return dx;
}

// ------------------------------------------------------------- attention

// Multi-head scaled dot-product attention over `batch` sequences of length
// `seq_len`. qkv holds [Q | K | V] column blocks, each d wide.
template <typename T>
struct AttentionCache {
  std::vector<Mat<T>> probs;  // batch * heads matrices, seq_len x seq_len
};

template <typename T>
Mat<T> attention_forward(const Mat<T>& qkv, int batch, int seq_len, int heads, bool causal,
                         std::type_identity_t<AttentionCache<T>>* cache) {
  const int d = static_cast<int>(qkv.cols() / 3);
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> out(static_cast<Eigen::Index>(batch) * seq_len, d);
  if (cache) cache->probs.assign(static_cast<std::size_t>(batch) * heads, Mat<T>());
  Mat<T> scores(seq_len, seq_len);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * seq_len;
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.block(r0, h * dh, seq_len, dh);
      const auto k = qkv.block(r0, d + h * dh, seq_len, dh);
      const auto v = qkv.block(r0, 2 * d + h * dh, seq_len, dh);
      scores.noalias() = q * k.transpose();
      for (int i = 0; i < seq_len; ++i) {
        const int last = causal ? i : seq_len - 1;
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j <= last; ++j) mx = std::max(mx, scores(i, j) * scale);
        T sum = 0;
        for (int j = 0; j <= last; ++j) {
          const T e = std::exp(scores(i, j) * scale - mx);
          scores(i, j) = e;
          sum += e;
        }
        const T inv = T(1) / sum;
        for (int j = 0; j <= last; ++j) scores(i, j) *= inv;
        for (int j = last + 1; j < seq_len; ++j) scores(i, j) = 0;
      }
      out.block(r0, h * dh, seq_len, dh).noalias() = scores * v;
      if (cache) cache->probs[static_cast<std::size_t>(b) * heads + h] = scores;
    }
  }
  return out;
}

template <typename T>
Mat<T> attention_backward(const Mat<T>& qkv, const AttentionCache<T>& cache, const Mat<T>& dout, int batch,
                          int seq_len, int heads) {
  const int d = static_cast<int>(qkv.cols() / 3);
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> dqkv(qkv.rows(), qkv.cols());
  Mat<T> dp(seq_len, seq_len);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * seq_len;
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& p = cache.probs[static_cast<std::size_t>(b) * heads + h];
      const auto q = qkv.block(r0, h * dh, seq_len, dh);
      const auto k = qkv.block(r0, d + h * dh, seq_len, dh);
      const auto v = qkv.block(r0, 2 * d + h * dh, seq_len, dh);
      const auto dO = dout.block(r0, h * dh, seq_len, dh);
      dqkv.block(r0, 2 * d + h * dh, seq_len, dh).noalias() = p.transpose() * dO;
      dp.noalias() = dO * v.transpose();
      // Softmax Jacobian; masked entries have p = 0 and drop out.
      for (int i = 0; i < seq_len; ++i) {
        const T dot = p.row(i).dot(dp.row(i));
        dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot) * scale).matrix();
      }
      dqkv.block(r0, h * dh, seq_len, dh).noalias() = dp * k;
      dqkv.block(r0, d + h * dh, seq_len, dh).noalias() = dp.transpose() * q;
    }
  }
  return dqkv;
}

}  // namespace mfm::nn
