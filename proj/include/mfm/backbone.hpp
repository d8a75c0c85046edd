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
#include <vector>

#include "mfm/nn.hpp"

namespace mfm {

struct BackboneShape {
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int mlp_ratio = 4;
};

// One pre-LN transformer block: x + Attn(LN1(x)), then x + MLP(LN2(x)).
template <typename T>
struct Block {
  nn::LayerNorm<T> ln1;
  nn::Linear<T> qkv;
  nn::Linear<T> attn_out;
  nn::LayerNorm<T> ln2;
  nn::Linear<T> fc;
  nn::Linear<T> proj;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    nn::LayerNorm<T>::visit(self.ln1, prefix + ".ln1", f);
    nn::Linear<T>::visit(self.qkv, prefix + ".qkv", f);
    nn::Linear<T>::visit(self.attn_out, prefix + ".attn_out", f);
    nn::LayerNorm<T>::visit(self.ln2, prefix + ".ln2", f);
    nn::Linear<T>::visit(self.fc, prefix + ".fc", f);
    nn::Linear<T>::visit(self.proj, prefix + ".proj", f);
  }
};

// Stack of blocks followed by a final layer norm.
template <typename T>
struct Backbone {
  std::vector<Block<T>> blocks;
  nn::LayerNorm<T> ln_f;
  int n_heads = 1;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      Block<T>::visit(self.blocks[i], prefix + ".blocks." + std::to_string(i), f);
    }
    nn::LayerNorm<T>::visit(self.ln_f, prefix + ".ln_f", f);
  }
};

template <typename T>
struct BlockCache {
  nn::LayerNormCache<T> ln1;
  Mat<T> a;
  Mat<T> qkv;
  nn::AttentionCache<T> attn;
  Mat<T> att;
  nn::LayerNormCache<T> ln2;
  Mat<T> m;
  Mat<T> f;
  Mat<T> g;
};

template <typename T>
struct BackboneCache {
  int batch = 0;
  int seq_len = 0;
  bool causal = true;
  std::vector<BlockCache<T>> blocks;
  nn::LayerNormCache<T> ln_f;
};

// Residual-output projections are scaled by 1/sqrt(2 n_layers).
template <typename T>
Backbone<T> init_backbone(const BackboneShape& s, Rng& rng) {
  Backbone<T> bb;
  bb.n_heads = s.n_heads;
  const double std = 0.02;
  const double resid_std = std / std::sqrt(2.0 * s.n_layers);
  const int d = s.d_model;
  const int hidden = s.mlp_ratio * d;
  for (int l = 0; l < s.n_layers; ++l) {
    Block<T> b;
    b.ln1 = nn::make_layer_norm<T>(d);
    b.qkv = nn::make_linear<T>(d, 3 * d, std, rng);
    b.attn_out = nn::make_linear<T>(d, d, resid_std, rng);
    b.ln2 = nn::make_layer_norm<T>(d);
    b.fc = nn::make_linear<T>(d, hidden, std, rng);
    b.proj = nn::make_linear<T>(hidden, d, resid_std, rng);
    bb.blocks.push_back(std::move(b));
  }
  bb.ln_f = nn::make_layer_norm<T>(d);
  return bb;
}

// x: (batch * seq_len) x d_model. Returns the final-LN output.
template <typename T>
Mat<T> backbone_forward(const Backbone<T>& bb, Mat<T> x, int batch, int seq_len, bool causal,
                        std::type_identity_t<BackboneCache<T>>* cache) {
  if (cache) {
    cache->batch = batch;
    cache->seq_len = seq_len;
    cache->causal = causal;
    cache->blocks.assign(bb.blocks.size(), BlockCache<T>());
  }
  for (std::size_t l = 0; l < bb.blocks.size(); ++l) {
    const Block<T>& blk = bb.blocks[l];
    BlockCache<T> local;
    BlockCache<T>& c = cache ? cache->blocks[l] : local;
    c.a = nn::layer_norm_forward(x, blk.ln1, &c.ln1);
    c.qkv = nn::linear_forward(c.a, blk.qkv);
    c.att = nn::attention_forward(c.qkv, batch, seq_len, bb.n_heads, causal, cache ? &c.attn : nullptr);
    Mat<T> x1 = x + nn::linear_forward(c.att, blk.attn_out);
    c.m = nn::layer_norm_forward(x1, blk.ln2, &c.ln2);
    c.f = nn::linear_forward(c.m, blk.fc);
    c.g = nn::gelu_forward(c.f);
    Mat<T> x2 = x1 + nn::linear_forward(c.g, blk.proj);
    x = std::move(x2);
  }
  return nn::layer_norm_forward(x, bb.ln_f, cache ? &cache->ln_f : nullptr);
}

// Returns dL/dx for the backbone input; accumulates parameter gradients.
template <typename T>
Mat<T> backbone_backward(const Backbone<T>& bb, const BackboneCache<T>& cache, const Mat<T>& dy, Backbone<T>& grads) {
  Mat<T> dx = nn::layer_norm_backward(cache.ln_f, bb.ln_f, dy, grads.ln_f);
  for (std::size_t l = bb.blocks.size(); l-- > 0;) {
    const Block<T>& blk = bb.blocks[l];
    Block<T>& g = grads.blocks[l];
    const BlockCache<T>& c = cache.blocks[l];
    // MLP branch.
    Mat<T> dg = nn::linear_backward(c.g, blk.proj, dx, g.proj);
    Mat<T> df = nn::gelu_backward(c.f, dg);
    Mat<T> dm = nn::linear_backward(c.m, blk.fc, df, g.fc);
    dx += nn::layer_norm_backward(c.ln2, blk.ln2, dm, g.ln2);
    // Attention branch.
    Mat<T> datt = nn::linear_backward(c.att, blk.attn_out, dx, g.attn_out);
    Mat<T> dqkv = nn::attention_backward(c.qkv, c.attn, datt, cache.batch, cache.seq_len, bb.n_heads);
    Mat<T> da = nn::linear_backward(c.a, blk.qkv, dqkv, g.qkv);
    dx += nn::layer_norm_backward(c.ln1, blk.ln1, da, g.ln1);
  }
  return dx;
}

// Copy of `p` with every parameter zeroed; used as a gradient accumulator.
template <typename P>
P zeros_like(const P& p) {
  P z = p;
  P::visit(z, "", [](const std::string&, auto& m) { m.setZero(); });
  return z;
}

}  // namespace mfm
