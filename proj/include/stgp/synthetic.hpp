// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic multi-domain traffic-like benchmark with controllable shift.

#pragma once

#include "stgp/data.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace stgp {

struct DomainShift {
  double speed_scale = 1.0;
  double phase_shift = 0.0;  // hours
  double noise_scale = 1.0;
};

struct SynthSpec {
  int num_nodes = 20;
  int num_sources = 3;
  int source_days = 7;
  int target_days = 14;
  std::int64_t interval = 300;
  std::int64_t start_epoch = 1704067200;  // Monday 2024-01-01 00:00 UTC
  double radius = 0.35;  // grown as needed to connect the graph
  double base_speed = 60.0;
  double base_spread = 2.0;  // deviation of the per-node baselines
  double amplitude = 15.0;
  double ar_rho = 0.95;
  double noise_std = 4.0;  // stationary deviation of the AR component
  double obs_noise = 1.0;
  /// Sources get phase shifts evenly spaced over [-spread, +spread] hours.
  double source_phase_spread = 2.0;
  DomainShift target{0.85, 3.0, 1.3};
  std::uint64_t seed = 0;

  /// Keys match the field names; target shift keys are speed_scale,
  /// phase_shift and noise_scale. Unknown keys throw.
  static SynthSpec from_key_values(const std::map<std::string, std::string>& kv);
  static SynthSpec from_file(const std::filesystem::path& path);
  std::string to_text() const;
};

struct SynthDataset {
  std::vector<std::pair<Graph, SignalTensor>> sources;
  std::pair<Graph, SignalTensor> target;
};

SynthDataset generate_synthetic(const SynthSpec& spec);

/// One domain: random geometric graph plus signal under `shift`.
/// `domain_seed` fixes graph and node parameters.
std::pair<Graph, SignalTensor> generate_domain(const SynthSpec& spec, std::uint64_t domain_seed,
                                               int days, const DomainShift& shift);

/// Mean over hour-of-day slots and channels of |target profile - mean
/// source profile|, where a profile averages every node and day per slot.
double distribution_distance(const std::vector<SignalTensor>& sources, const SignalTensor& target);

}  // namespace stgp
