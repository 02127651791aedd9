// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/prompting.hpp"

#include <stdexcept>
#include <vector>

namespace stgp {

std::string task_bank_name(const std::string& task, const std::string& role) {
  return "task." + task + "." + role;
}

Mat init_prompt_bank(const ModelConfig& cfg, std::mt19937_64& rng) {
  if (cfg.num_prompts < 1) throw std::invalid_argument("prompt bank needs at least one prompt");
  return init_normal(cfg.num_prompts, cfg.d_h, 0.02, rng);
}

ad::Var prompt_apply(ad::Tape& tape, ad::Var h, ad::Var bank, double phi) {
  return tape.prompt(h, bank, phi);
}

std::pair<ad::Var, ad::Var> domain_prompt(ad::Tape& tape, ad::Var s, ad::Var pos,
                                          ad::Var bank_spatial, ad::Var bank_temporal,
                                          double phi) {
  ad::Var x = tape.add(s, pos);
  ad::Var ss = bank_spatial.valid() ? tape.prompt(x, bank_spatial, phi) : x;
  ad::Var st = bank_temporal.valid() ? tape.prompt(x, bank_temporal, phi) : x;
  return {ss, st};
}

ad::Var task_prompt(ad::Tape& tape, ad::Var h, const MaskSpec& mask, ad::Var pos,
                    ad::Var bank_masked, ad::Var bank_unmasked, double phi) {
  ad::Var x = tape.add(h, pos);
  const int rows = mask.nodes * mask.patches;
  if (tape.value(x).rows() != rows) throw std::invalid_argument("task_prompt: grid mismatch");
  std::vector<int> masked, unmasked;
  for (int i = 0; i < mask.nodes; ++i)
    for (int t = 0; t < mask.patches; ++t)
      (mask.is_masked(i, t) ? masked : unmasked).push_back(i * mask.patches + t);

  std::vector<int> back(rows);
  for (std::size_t r = 0; r < masked.size(); ++r) back[masked[r]] = static_cast<int>(r);
  for (std::size_t r = 0; r < unmasked.size(); ++r)
    back[unmasked[r]] = static_cast<int>(masked.size() + r);

  ad::Var xm = tape.gather_rows(x, std::move(masked));
  ad::Var xu = tape.gather_rows(x, std::move(unmasked));
  if (bank_masked.valid()) xm = tape.prompt(xm, bank_masked, phi);
  if (bank_unmasked.valid()) xu = tape.prompt(xu, bank_unmasked, phi);
  return tape.gather_rows(tape.concat_rows(xm, xu), std::move(back));
}

}  // namespace stgp
