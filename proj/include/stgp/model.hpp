// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Full forward pass: embed -> mask -> (domain prompt) -> encode ->
// recover -> (task prompt) -> decode.

#pragma once

#include "stgp/config.hpp"
#include "stgp/data.hpp"
#include "stgp/encoder.hpp"
#include "stgp/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stgp {

/// One window in normalized units.
struct Sample {
  Mat patches;  // (N * T_p) x (L * d_x), node-major
  std::vector<int> tod;  // per patch
  std::vector<int> dow;
  int nodes = 0;
  int num_patches = 0;
};

struct ForwardOptions {
  bool domain_prompts = false;
  std::string task;  // empty: no task prompts
  ad::AttentionProbe* probe = nullptr;
};

struct ForwardResult {
  ad::Var pred;     // (N * T_p) x (L * d_x)
  ad::Var encoded;  // (N_u * T_u) x d_h
  ad::Var loss;     // set when a target was passed
};

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Spatial and temporal banks, or one shared bank feeding both branches.
  void add_domain_prompts(std::uint64_t seed, bool shared = false);
  /// Masked and unmasked banks, or one shared bank for every cell.
  void add_task_prompts(const std::string& task, std::uint64_t seed, bool shared = false);
  bool has_domain_prompts() const;
  bool has_task_prompts(const std::string& task) const;

  /// Options that use every prompt bank present for `task`.
  ForwardOptions default_options(const std::string& task = "") const;

  ForwardResult forward(ad::Tape& tape, const Sample& sample, const GraphContext& graph,
                        const MaskSpec& mask, const ForwardOptions& opt,
                        const Mat* target = nullptr);

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace stgp
