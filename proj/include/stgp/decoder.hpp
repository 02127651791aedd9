// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Mask-token recovery, gated temporal/graph convolution layers, the
// prediction head and the masked reconstruction loss.

#pragma once

#include "stgp/config.hpp"
#include "stgp/data.hpp"
#include "stgp/params.hpp"

#include <random>
#include <string>
#include <vector>

namespace stgp {

void init_decoder(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng);
void init_head(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

/// Full (N * T_p) x d_h grid: unmasked rows come from the compact block in
/// node-major order, masked rows take the 1 x d_h token.
ad::Var recover_full(ad::Tape& tape, ad::Var compact, const MaskSpec& mask, ad::Var token);

struct LayerOutput {
  ad::Var out;    // gated output plus residual
  ad::Var gated;  // gated output alone, fed to the skip projection
};

/// One gated layer over node-major rows (i * steps + t). `prefix` names the
/// layer's parameters (tcn.w<j>, tcn.b, gcn.w_g, gcn.w_self, gate.w1,
/// gate.w2, gate.b).
LayerOutput gated_st_layer(Binder& b, ad::Var h, const Mat& adjacency, int steps,
                           const std::string& prefix, int kernel);

/// Prediction head: GELU between layers, linear output of width L * d_x.
ad::Var prediction_head(Binder& b, ad::Var x);

/// H* -> predictions. When add_pos is set the positional table is added at
/// entry; tod/dow are per patch (length T_p).
ad::Var decode(Binder& b, ad::Var h_star, const Mat& adjacency, const std::vector<int>& tod,
               const std::vector<int>& dow, bool add_pos, const ModelConfig& cfg);

/// 0/1 weights over (N * T_p) x width marking the eval cells.
Mat eval_weights(const MaskSpec& mask, int width);

/// Mean absolute error over eval cells; throws on an empty eval set.
ad::Var masked_mae(ad::Tape& tape, ad::Var pred, const Mat& target, const MaskSpec& mask);

}  // namespace stgp
