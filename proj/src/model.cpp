// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/model.hpp"

#include "stgp/decoder.hpp"
#include "stgp/prompting.hpp"

#include <numeric>
#include <stdexcept>
#include <tuple>

namespace stgp {

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  std::mt19937_64 rng(seed);
  init_encoder(params_, cfg_, rng);
  init_decoder(params_, cfg_, rng);
  init_head(params_, cfg_, rng);
}

void Model::add_domain_prompts(std::uint64_t seed, bool shared) {
  std::mt19937_64 rng(seed);
  if (shared) {
    params_.add(kDomainShared, init_prompt_bank(cfg_, rng));
  } else {
    params_.add(kDomainSpatial, init_prompt_bank(cfg_, rng));
    params_.add(kDomainTemporal, init_prompt_bank(cfg_, rng));
  }
}

void Model::add_task_prompts(const std::string& task, std::uint64_t seed, bool shared) {
  std::mt19937_64 rng(seed);
  if (shared) {
    params_.add(task_bank_name(task, "shared"), init_prompt_bank(cfg_, rng));
  } else {
    params_.add(task_bank_name(task, "masked"), init_prompt_bank(cfg_, rng));
    params_.add(task_bank_name(task, "unmasked"), init_prompt_bank(cfg_, rng));
  }
}

bool Model::has_domain_prompts() const {
  return params_.contains(kDomainShared) || params_.contains(kDomainSpatial) ||
         params_.contains(kDomainTemporal);
}

bool Model::has_task_prompts(const std::string& task) const {
  return params_.contains(task_bank_name(task, "shared")) ||
         params_.contains(task_bank_name(task, "masked")) ||
         params_.contains(task_bank_name(task, "unmasked"));
}

ForwardOptions Model::default_options(const std::string& task) const {
  ForwardOptions o;
  o.domain_prompts = has_domain_prompts();
  if (!task.empty() && has_task_prompts(task)) o.task = task;
  return o;
}

ForwardResult Model::forward(ad::Tape& tape, const Sample& sample, const GraphContext& graph,
                             const MaskSpec& mask, const ForwardOptions& opt, const Mat* target) {
  if (mask.nodes != sample.nodes || mask.patches != sample.num_patches ||
      graph.num_nodes() != sample.nodes) {
    throw std::invalid_argument("forward: sample, mask and graph sizes differ");
  }
  Binder b(tape, params_);
  auto bank = [&](const std::string& name) {
    return params_.contains(name) ? b(name) : ad::Var{};
  };

  GatherResult g = gather_unmasked(sample.patches, mask);
  const int n_u = static_cast<int>(g.node_map.size());
  const int t_u = static_cast<int>(g.step_map.size());
  ad::Var s = embed_patches(b, g.block);
  ad::Var pos = positional_rows(b, "encoder.pos", g.step_map, n_u);

  EncoderInput in;
  in.n_u = n_u;
  in.t_u = t_u;
  in.node_map = g.node_map;
  for (int t : g.step_map) {
    in.tod.push_back(sample.tod[t]);
    in.dow.push_back(sample.dow[t]);
  }
  if (opt.domain_prompts) {
    ad::Var shared = bank(kDomainShared);
    ad::Var bs = shared.valid() ? shared : bank(kDomainSpatial);
    ad::Var bt = shared.valid() ? shared : bank(kDomainTemporal);
    std::tie(in.spatial, in.temporal) = domain_prompt(tape, s, pos, bs, bt, cfg_.phi);
  } else {
    in.spatial = in.temporal = tape.add(s, pos);
  }

  ForwardResult r;
  r.encoded = encode(b, in, graph, cfg_, opt.probe);
  ad::Var full = recover_full(tape, r.encoded, mask, b("decoder.mask_token"));

  ad::Var h_star = full;
  bool add_pos = true;
  if (!opt.task.empty()) {
    std::vector<int> all(sample.num_patches);
    std::iota(all.begin(), all.end(), 0);
    ad::Var pos_d = positional_rows(b, "decoder.pos", all, sample.nodes);
    ad::Var shared = bank(task_bank_name(opt.task, "shared"));
    ad::Var bm = shared.valid() ? shared : bank(task_bank_name(opt.task, "masked"));
    ad::Var bu = shared.valid() ? shared : bank(task_bank_name(opt.task, "unmasked"));
    h_star = task_prompt(tape, full, mask, pos_d, bm, bu, cfg_.phi);
    add_pos = false;
  }
  r.pred = decode(b, h_star, graph.propagation, sample.tod, sample.dow, add_pos, cfg_);
  if (target) r.loss = masked_mae(tape, r.pred, *target, mask);
  return r;
}

}  // namespace stgp
