// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/encoder.hpp"

#include <deque>
#include <stdexcept>

namespace stgp {

IntMat hop_distances(const Mat& adjacency) {
  const int n = static_cast<int>(adjacency.rows());
  IntMat hops = IntMat::Constant(n, n, -1);
  for (int src = 0; src < n; ++src) {
    std::deque<int> queue{src};
    hops(src, src) = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v = 0; v < n; ++v) {
        if (adjacency(u, v) > 0.0 && hops(src, v) < 0) {
          hops(src, v) = hops(src, u) + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return hops;
}

int hop_bucket(int hops, int hop_max) {
  if (hops < 0) return hop_max + 1;
  return hops < hop_max ? hops : hop_max;
}

int degree_bucket(int degree) {
  if (degree <= 3) return degree < 0 ? 0 : degree;
  if (degree <= 7) return 4;
  return 5;
}

GraphContext GraphContext::build(const Graph& graph) {
  GraphContext g;
  g.adjacency = graph.adjacency;
  g.propagation = graph.adjacency;
  for (Eigen::Index i = 0; i < g.propagation.rows(); ++i) {
    const double total = g.propagation.row(i).sum();
    if (total > 0.0) g.propagation.row(i) /= total;
  }
  g.hops = hop_distances(graph.adjacency);
  const int n = static_cast<int>(graph.adjacency.rows());
  g.degree.assign(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && graph.adjacency(i, j) > 0.0) ++g.degree[i];
  return g;
}

namespace {

void init_layer(ParamStore& s, const std::string& p, const ModelConfig& cfg,
                std::mt19937_64& rng) {
  const int d = cfg.d_h;
  const int f = cfg.d_h * cfg.ffn_mult;
  for (const char* ln : {"ln1", "ln2"}) {
    s.add(p + ln + ".gamma", Mat::Ones(1, d));
    s.add(p + ln + ".beta", Mat::Zero(1, d));
  }
  for (const char* w : {"wq", "wk", "wv", "wo"}) s.add(p + "attn." + w, init_linear(d, d, rng));
  for (const char* w : {"bq", "bk", "bv", "bo"}) s.add(p + "attn." + w, Mat::Zero(1, d));
  s.add(p + "ffn.w1", init_linear(d, f, rng));
  s.add(p + "ffn.b1", Mat::Zero(1, f));
  s.add(p + "ffn.w2", init_linear(f, d, rng));
  s.add(p + "ffn.b2", Mat::Zero(1, d));
}

ad::Var linear(Binder& b, ad::Var x, const std::string& w, const std::string& bias) {
  return b.tape().add_row(b.tape().matmul(x, b(w)), b(bias));
}

}  // namespace

void init_encoder(ParamStore& s, const ModelConfig& cfg, std::mt19937_64& rng) {
  if (cfg.d_h % cfg.heads != 0) throw std::invalid_argument("heads must divide d_h");
  const int d = cfg.d_h;
  s.add("encoder.patch_proj.weight", init_linear(cfg.patch_len * cfg.channels, d, rng));
  s.add("encoder.patch_proj.bias", Mat::Zero(1, d));
  s.add("encoder.pos", init_normal(cfg.max_patches, d, 0.02, rng));
  s.add("encoder.tod", init_normal(24, d, 0.02, rng));
  s.add("encoder.dow", init_normal(7, d, 0.02, rng));
  s.add("encoder.degree", init_normal(kDegreeBuckets, d, 0.02, rng));
  s.add("encoder.hop_bias", Mat::Zero(cfg.hop_max + 2, cfg.heads));
  for (int l = 0; l < cfg.layers_t; ++l)
    init_layer(s, "encoder.temporal." + std::to_string(l) + ".", cfg, rng);
  for (int l = 0; l < cfg.layers_s; ++l)
    init_layer(s, "encoder.spatial." + std::to_string(l) + ".", cfg, rng);
  s.add("encoder.fuse.w1", init_linear(d, d, rng));
  s.add("encoder.fuse.w2", init_linear(d, d, rng));
  s.add("encoder.fuse.b", Mat::Zero(1, d));
}

ad::Var positional_rows(Binder& b, const std::string& table, const std::vector<int>& step_map,
                        int nodes) {
  const auto limit = b.store().at(table).value.rows();
  const int t_u = static_cast<int>(step_map.size());
  std::vector<int> idx(static_cast<std::size_t>(nodes) * t_u);
  for (int t = 0; t < t_u; ++t) {
    if (step_map[t] < 0 || step_map[t] >= limit) {
      throw std::out_of_range("step index outside positional table");
    }
  }
  for (int i = 0; i < nodes; ++i)
    for (int t = 0; t < t_u; ++t) idx[static_cast<std::size_t>(i) * t_u + t] = step_map[t];
  return b.tape().gather_rows(b(table), std::move(idx));
}

ad::Var embed_patches(Binder& b, const Mat& patches) {
  return linear(b, b.tape().constant(patches), "encoder.patch_proj.weight",
                "encoder.patch_proj.bias");
}

ad::Var transformer_layer(Binder& b, ad::Var x, const std::string& p, int group_size, int heads,
                          const ad::AttentionBias* bias, ad::AttentionProbe* probe) {
  ad::Tape& t = b.tape();
  ad::Var h = t.layer_norm(x, b(p + "ln1.gamma"), b(p + "ln1.beta"));
  ad::Var q = linear(b, h, p + "attn.wq", p + "attn.bq");
  ad::Var k = linear(b, h, p + "attn.wk", p + "attn.bk");
  ad::Var v = linear(b, h, p + "attn.wv", p + "attn.bv");
  ad::Var a = t.attention(q, k, v, group_size, heads, bias, probe);
  x = t.add(x, linear(b, a, p + "attn.wo", p + "attn.bo"));
  h = t.layer_norm(x, b(p + "ln2.gamma"), b(p + "ln2.beta"));
  h = t.gelu(linear(b, h, p + "ffn.w1", p + "ffn.b1"));
  return t.add(x, linear(b, h, p + "ffn.w2", p + "ffn.b2"));
}

ad::Var temporal_encode(Binder& b, ad::Var s, int n_u, int t_u, const std::vector<int>& tod,
                        const std::vector<int>& dow, const ModelConfig& cfg,
                        ad::AttentionProbe* probe) {
  ad::Tape& t = b.tape();
  if (static_cast<int>(tod.size()) != t_u || static_cast<int>(dow.size()) != t_u) {
    throw std::invalid_argument("temporal_encode: time features do not match steps");
  }
  std::vector<int> ti, di;
  ti.reserve(static_cast<std::size_t>(n_u) * t_u);
  di.reserve(ti.capacity());
  for (int i = 0; i < n_u; ++i)
    for (int k = 0; k < t_u; ++k) {
      ti.push_back(tod[k]);
      di.push_back(dow[k]);
    }
  ad::Var x = t.add(s, t.gather_rows(b("encoder.tod"), std::move(ti)));
  x = t.add(x, t.gather_rows(b("encoder.dow"), std::move(di)));
  for (int l = 0; l < cfg.layers_t; ++l) {
    x = transformer_layer(b, x, "encoder.temporal." + std::to_string(l) + ".", t_u, cfg.heads,
                          nullptr, probe);
  }
  return x;
}

ad::Var spatial_encode(Binder& b, ad::Var s, int n_u, int t_u, const GraphContext& graph,
                       const std::vector<int>& node_map, const ModelConfig& cfg,
                       ad::AttentionProbe* probe) {
  ad::Tape& t = b.tape();
  if (static_cast<int>(node_map.size()) != n_u) {
    throw std::invalid_argument("spatial_encode: node map does not match nodes");
  }
  std::vector<int> deg;
  deg.reserve(static_cast<std::size_t>(n_u) * t_u);
  for (int i = 0; i < n_u; ++i)
    for (int k = 0; k < t_u; ++k) deg.push_back(degree_bucket(graph.degree.at(node_map[i])));
  ad::Var x = t.add(s, t.gather_rows(b("encoder.degree"), std::move(deg)));
  if (cfg.layers_s == 0) return x;

  // step-major order puts each step's nodes in one contiguous group
  std::vector<int> to_step(static_cast<std::size_t>(n_u) * t_u);
  std::vector<int> to_node(to_step.size());
  for (int i = 0; i < n_u; ++i)
    for (int k = 0; k < t_u; ++k) {
      to_step[static_cast<std::size_t>(k) * n_u + i] = i * t_u + k;
      to_node[static_cast<std::size_t>(i) * t_u + k] = k * n_u + i;
    }
  ad::AttentionBias bias;
  bias.buckets.resize(n_u, n_u);
  for (int a = 0; a < n_u; ++a)
    for (int c = 0; c < n_u; ++c)
      bias.buckets(a, c) = hop_bucket(graph.hops(node_map[a], node_map[c]), cfg.hop_max);
  bias.table = b("encoder.hop_bias");

  x = t.gather_rows(x, std::move(to_step));
  for (int l = 0; l < cfg.layers_s; ++l) {
    x = transformer_layer(b, x, "encoder.spatial." + std::to_string(l) + ".", n_u, cfg.heads,
                          &bias, probe);
  }
  return t.gather_rows(x, std::move(to_node));
}

ad::Var gated_fuse(ad::Tape& tape, ad::Var h_s, ad::Var h_t, ad::Var w1, ad::Var w2, ad::Var bias,
                   ad::Var* gate_out) {
  ad::Var z = tape.sigmoid(tape.add_row(tape.add(tape.matmul(h_s, w1), tape.matmul(h_t, w2)), bias));
  if (gate_out) *gate_out = z;
  return tape.gate_mix(z, h_s, h_t);
}

ad::Var encode(Binder& b, const EncoderInput& in, const GraphContext& graph,
               const ModelConfig& cfg, ad::AttentionProbe* probe) {
  ad::Var hs = spatial_encode(b, in.spatial, in.n_u, in.t_u, graph, in.node_map, cfg, probe);
  ad::Var ht = temporal_encode(b, in.temporal, in.n_u, in.t_u, in.tod, in.dow, cfg, probe);
  return gated_fuse(b.tape(), hs, ht, b("encoder.fuse.w1"), b("encoder.fuse.w2"),
                    b("encoder.fuse.b"));
}

}  // namespace stgp
