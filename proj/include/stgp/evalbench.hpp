// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Metrics, statistical baselines, test-split evaluation and the
// end-to-end experiment runner.

#pragma once

#include "stgp/pipeline.hpp"
#include "stgp/synthetic.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace stgp {

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

/// MAE and RMSE over aligned arrays; throws on empty or misaligned input.
Metrics metrics(const std::vector<double>& pred, const std::vector<double>& truth);

/// Historical average per (node, step-of-day slot, channel) over `history`,
/// falling back to the node mean for empty slots.
Prediction baseline_ha(const SignalTensor& history, const SignalTensor& window,
                       const TaskTemplate& tpl, int num_patches, int patch_len);

/// Mean of the observed nodes at each step. Masked future steps read the
/// last visible patch at the same offset.
Prediction baseline_mean(const SignalTensor& window, const TaskTemplate& tpl, int num_patches,
                         int patch_len);

/// Adjacency-weighted mean over the k strongest observed neighbours, with
/// the MEAN prediction for nodes that have none.
Prediction baseline_knn(const Graph& graph, const SignalTensor& window, const TaskTemplate& tpl,
                        int num_patches, int patch_len, int k);

using Predictor = std::function<Prediction(const SignalTensor& window)>;

struct EvalOutcome {
  Metrics overall;
  std::map<int, Metrics> horizon;  // 1-based step within the predicted segment
  std::size_t windows = 0;
  std::set<std::int64_t> test_epochs;  // every step the windows cover
  Mat first_embedding;
};

/// Runs `predictor` over windows of the test split and scores the eval grid
/// against the window's own values.
EvalOutcome evaluate(const Predictor& predictor, const SignalTensor& test, int window_steps,
                     int stride);

struct ParamAccounting {
  std::size_t domain_stage = 0;
  std::size_t task_stage = 0;
  std::size_t task_stage_with_head = 0;
  std::size_t formula = 0;  // 2 * N_p * d_h
  double published_reference = 3e3;
};
ParamAccounting param_accounting(const ModelConfig& cfg);

struct MetricRow {
  std::string task;
  std::string method;
  std::string horizon;  // "avg" or the step count
  Metrics m;
};

struct ExperimentOptions {
  std::vector<TaskKind> tasks{TaskKind::Forecast, TaskKind::Kriging, TaskKind::Extrapolation};
  /// Extra ablations: "ft", "sdp", "stp". Zero-shot always runs.
  std::vector<std::string> ablations;
  bool tune_head_extrapolation = true;
  std::function<void(const std::string&)> progress;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<StageLog> logs;
  std::map<std::string, std::string> kv;
  std::vector<std::string> errors;
  bool isolation_ok = true;
  Mat embedding;  // encoder output of the first forecasting test window
};

ExperimentResult run_experiment(const SynthDataset& data, const TrainConfig& cfg,
                                const ExperimentOptions& opt = {});

/// MAE of `method` on `task` at horizon "avg"; NaN when absent.
double find_mae(const std::vector<MetricRow>& rows, const std::string& task,
                const std::string& method);

}  // namespace stgp
