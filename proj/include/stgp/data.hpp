// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Dataset ingestion, normalization, patching, time features and the
// spatio-temporal masks that encode every task.

#pragma once

#include "stgp/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stgp {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Graph {
  int num_nodes = 0;
  Mat adjacency;  // num_nodes x num_nodes, entries in [0, 1]
  std::vector<std::string> node_ids;

  void validate() const;
  /// Induced subgraph on `keep` (in the given order).
  Graph subgraph(const std::vector<int>& keep) const;
};

/// values[(i * steps + t) * channels + c], physical units.
struct SignalTensor {
  int nodes = 0;
  int steps = 0;
  int channels = 1;
  std::vector<double> values;
  std::int64_t start_epoch = 0;
  std::int64_t interval = 300;
  std::vector<std::string> channel_names;

  double& at(int i, int t, int c) {
    return values[(static_cast<std::size_t>(i) * steps + t) * channels + c];
  }
  double at(int i, int t, int c) const {
    return values[(static_cast<std::size_t>(i) * steps + t) * channels + c];
  }
  void validate() const;
  /// Steps [begin, end) for every node; timestamps shift accordingly.
  SignalTensor slice_steps(int begin, int end) const;
  SignalTensor select_nodes(const std::vector<int>& keep) const;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline constexpr double kStdFloor = 1e-6;

/// Per-channel mean and population standard deviation; throws DataError
/// ("degenerate channel") when a channel's deviation is below the floor.
NormStats compute_stats(const SignalTensor& signal);
/// Identity statistics (mean 0, std 1) for unnormalized runs.
NormStats identity_stats(int channels);
SignalTensor zscore(const SignalTensor& signal, const NormStats& stats);
SignalTensor unzscore(const SignalTensor& signal, const NormStats& stats);

/// Loads a dataset directory described by a JSON meta file.
std::pair<Graph, SignalTensor> load_dataset(const std::filesystem::path& meta_path);
/// Writes meta.json, adjacency.csv and values.bin under `dir`.
void save_dataset(const std::filesystem::path& dir, const Graph& graph, const SignalTensor& signal);

struct PatchSet {
  int nodes = 0;
  int num_patches = 0;
  int patch_len = 0;
  int channels = 1;
  /// Row i * num_patches + t holds steps [tL, (t+1)L) of node i,
  /// flattened channel-major (column c * patch_len + s).
  Mat values;
  std::vector<int> tod;  // hour of day of each patch's first step
  std::vector<int> dow;  // day of week, 0 = Monday
  std::int64_t start_epoch = 0;
  std::int64_t interval = 300;
};

PatchSet patchify(const SignalTensor& signal, int patch_len);
SignalTensor unpatchify(const PatchSet& patches);

/// Hour-of-day and day-of-week (0 = Monday, UTC) of each patch's first step.
std::pair<std::vector<int>, std::vector<int>> time_features(std::int64_t start_epoch,
                                                            std::int64_t interval, int steps,
                                                            int patch_len);
std::pair<std::vector<int>, std::vector<int>> time_features(const SignalTensor& signal,
                                                            int patch_len);

struct Cell {
  int node = 0;
  int step = 0;
  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

/// Patch (i, t) is masked iff i is in masked_nodes or t is in masked_steps.
struct MaskSpec {
  int nodes = 0;
  int patches = 0;
  std::vector<int> masked_nodes;  // sorted, unique
  std::vector<int> masked_steps;  // sorted, unique
  /// Explicit loss/metric cells; all masked cells when absent.
  std::optional<std::vector<Cell>> eval_cells;

  bool node_masked(int i) const;
  bool step_masked(int t) const;
  bool is_masked(int i, int t) const { return node_masked(i) || step_masked(t); }
  std::vector<int> unmasked_nodes() const;
  std::vector<int> unmasked_steps() const;
  std::vector<Cell> masked_cells() const;
  std::vector<Cell> effective_eval_cells() const;
  double masked_fraction() const;
  /// Sorts/dedups the index sets and checks N_u >= 1, T_u >= 1 and
  /// eval_cells within the masked set.
  void normalize_and_validate();
};

MaskSpec make_mask(int nodes, int patches, std::vector<int> masked_nodes,
                   std::vector<int> masked_steps,
                   std::optional<std::vector<Cell>> eval_cells = std::nullopt);

/// Per-dimension ratio r with (1 - r)^2 = 1 - total_ratio.
double per_dimension_ratio(double total_ratio);
/// floor(x + 0.5)
int round_half_up(double x);

MaskSpec sample_random_mask(int nodes, int patches, double total_ratio, std::mt19937_64& rng);

/// Unmasked rows of a node-major (N * T_p) x d block, compacted to
/// (N_u * T_u) x d in the original relative order.
struct GatherResult {
  Mat block;
  std::vector<int> node_map;  // compact node -> original node
  std::vector<int> step_map;  // compact step -> original step
  std::vector<int> row_map;   // compact row -> original row
};

GatherResult gather_unmasked(const Mat& patches, const MaskSpec& mask);
/// Writes the compact block back into a full (N * T_p) x d matrix at the
/// positions named by row_map. Other rows are left untouched.
void scatter_unmasked(const GatherResult& gathered, Mat& full);

/// Row indices of unmasked cells, node-major (matches GatherResult::row_map).
std::vector<int> unmasked_rows(const MaskSpec& mask);

}  // namespace stgp
