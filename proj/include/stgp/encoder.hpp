// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Dual-transformer encoder over unmasked patches: a temporal branch that
// attends across steps of one node and a spatial branch that attends across
// nodes at one step, fused by an elementwise gate.

#pragma once

#include "stgp/config.hpp"
#include "stgp/data.hpp"
#include "stgp/params.hpp"

#include <random>
#include <string>
#include <vector>

namespace stgp {

/// Breadth-first hop counts over edges A_ij > 0; -1 marks unreachable pairs.
IntMat hop_distances(const Mat& adjacency);
/// min(hops, hop_max), with hop_max + 1 for unreachable pairs.
int hop_bucket(int hops, int hop_max);
/// Degree buckets 0, 1, 2, 3, 4-7, 8+ -> 0..5.
int degree_bucket(int degree);
inline constexpr int kDegreeBuckets = 6;

/// Graph structure shared by the spatial branch and the decoder.
struct GraphContext {
  Mat adjacency;
  Mat propagation;  // row-normalized adjacency used by the decoder GCN
  IntMat hops;
  std::vector<int> degree;  // neighbours j != i with A_ij > 0

  static GraphContext build(const Graph& graph);
  int num_nodes() const { return static_cast<int>(adjacency.rows()); }
};

void init_encoder(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

/// Rows of a positional table for node-major compact rows: row i * t_u + t
/// receives table[step_map[t]]. Throws when a step exceeds the table.
ad::Var positional_rows(Binder& b, const std::string& table, const std::vector<int>& step_map,
                        int nodes);

/// Patch projection of an (N_u * T_u) x (L * d_x) block.
ad::Var embed_patches(Binder& b, const Mat& patches);

/// Pre-norm transformer layer with grouped attention.
ad::Var transformer_layer(Binder& b, ad::Var x, const std::string& prefix, int group_size,
                          int heads, const ad::AttentionBias* bias, ad::AttentionProbe* probe);

/// Input rows are node-major (i * t_u + t); tod/dow index the unmasked steps.
ad::Var temporal_encode(Binder& b, ad::Var s, int n_u, int t_u, const std::vector<int>& tod,
                        const std::vector<int>& dow, const ModelConfig& cfg,
                        ad::AttentionProbe* probe = nullptr);

/// node_map names the original node of each compact node.
ad::Var spatial_encode(Binder& b, ad::Var s, int n_u, int t_u, const GraphContext& graph,
                       const std::vector<int>& node_map, const ModelConfig& cfg,
                       ad::AttentionProbe* probe = nullptr);

/// Z = sigmoid(H_s W_1 + H_t W_2 + b); out = Z .* H_s + (1 - Z) .* H_t.
ad::Var gated_fuse(ad::Tape& tape, ad::Var h_s, ad::Var h_t, ad::Var w1, ad::Var w2, ad::Var bias,
                   ad::Var* gate_out = nullptr);

struct EncoderInput {
  ad::Var spatial;   // S_s* or S + PE_e
  ad::Var temporal;  // S_t* or S + PE_e
  int n_u = 0;
  int t_u = 0;
  std::vector<int> tod;  // per unmasked step
  std::vector<int> dow;
  std::vector<int> node_map;
};

ad::Var encode(Binder& b, const EncoderInput& in, const GraphContext& graph,
               const ModelConfig& cfg, ad::AttentionProbe* probe = nullptr);

}  // namespace stgp
