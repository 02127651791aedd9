// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Thresholded prompt banks on encoder inputs (domain prompts) and decoder
// inputs (task prompts).

#pragma once

#include "stgp/config.hpp"
#include "stgp/data.hpp"
#include "stgp/params.hpp"

#include <random>
#include <string>
#include <utility>

namespace stgp {

inline const std::string kDomainSpatial = "domain.spatial";
inline const std::string kDomainTemporal = "domain.temporal";
inline const std::string kDomainShared = "domain.shared";
std::string task_bank_name(const std::string& task, const std::string& role);  // masked|unmasked|shared

/// N_p x d_h bank drawn from N(0, 0.02).
Mat init_prompt_bank(const ModelConfig& cfg, std::mt19937_64& rng);

/// out = h + sum_j alpha_j p_j, alpha_j = sigmoid(h . p_j) if above phi else 0.
ad::Var prompt_apply(ad::Tape& tape, ad::Var h, ad::Var bank, double phi);

/// (S_s*, S_t*) from the compact block and its positional rows. An invalid
/// bank leaves that branch at S + PE_e.
std::pair<ad::Var, ad::Var> domain_prompt(ad::Tape& tape, ad::Var s, ad::Var pos,
                                          ad::Var bank_spatial, ad::Var bank_temporal,
                                          double phi);

/// H* with masked cells routed through bank_masked and the rest through
/// bank_unmasked, both after adding the decoder positional rows.
ad::Var task_prompt(ad::Tape& tape, ad::Var h, const MaskSpec& mask, ad::Var pos,
                    ad::Var bank_masked, ad::Var bank_unmasked, double phi);

}  // namespace stgp
