// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Staged training: masked pre-training on source domains, domain-prompt
// fitting and task-prompt fitting on a target domain, task masks,
// prediction and checkpoints.

#pragma once

#include "stgp/config.hpp"
#include "stgp/data.hpp"
#include "stgp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace stgp {

enum class TaskKind { Pretrain, Forecast, Kriging, Extrapolation };

std::string task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

struct TaskTemplate {
  TaskKind kind = TaskKind::Pretrain;
  double total_ratio = 0.75;
  int hist_patches = 24;
  int pred_patches = 1;
  std::vector<int> unobserved_nodes;
  bool inductive = false;

  /// Throws when the template cannot be laid over an N x T_p grid.
  void validate(int nodes, int patches) const;
};

/// Template for `kind` with the sizes and flags of `cfg`.
TaskTemplate make_template(TaskKind kind, const TrainConfig& cfg,
                           const std::vector<int>& unobserved);

/// Deterministic choice of round(N * fraction) unobserved nodes, sorted.
std::vector<int> choose_unobserved(int nodes, double fraction, std::uint64_t seed);

/// Test-time mask of a template. PRETRAIN requires `rng`.
MaskSpec task_mask(const TaskTemplate& tpl, int nodes, int patches,
                   std::mt19937_64* rng = nullptr);

/// Training mask for a spatial task: `hidden` nodes are always masked, and
/// pseudo-unobserved nodes drawn from the rest carry the loss.
MaskSpec training_mask(const TaskTemplate& tpl, int nodes, int patches,
                       const std::vector<int>& hidden, double pseudo_fraction,
                       std::mt19937_64& rng);

/// Random mask over the nodes outside `hidden`, with `hidden` added to M_s.
MaskSpec random_mask_with_hidden(int nodes, int patches, double total_ratio,
                                 const std::vector<int>& hidden, std::mt19937_64& rng);

// Splits -------------------------------------------------------------------

struct SourceSplit {
  SignalTensor train;
  SignalTensor val;
};
SourceSplit split_source(const SignalTensor& signal, double train_fraction);

struct TargetSplit {
  SignalTensor prompt;
  SignalTensor val;
  SignalTensor test;
};
TargetSplit split_target(const SignalTensor& signal, int prompt_days, int val_days);

/// Window starts 0, stride, ... with start + window <= steps.
std::vector<int> window_starts(int steps, int window, int stride);

/// A graph with its normalized signal.
struct Domain {
  Graph graph;
  GraphContext context;
  SignalTensor signal;  // normalized
  NormStats stats;
};
Domain make_domain(const Graph& graph, const SignalTensor& raw, const NormStats& stats);

Sample make_sample(const SignalTensor& signal, int start, int num_patches, int patch_len);

// Checkpoints --------------------------------------------------------------

struct Checkpoint {
  std::string stage;  // pretrained | domain_prompted | task_prompted:<task>
  TrainConfig config;
  Model model;
  std::map<std::string, std::string> meta;

  /// Writes manifest.txt, params.bin and config.txt under `dir`.
  void save(const std::filesystem::path& dir) const;
  /// Verifies every array against the shapes implied by the stored config.
  static Checkpoint load(const std::filesystem::path& dir);

  std::optional<NormStats> norm_stats() const;
  void set_norm_stats(const NormStats& stats);
  std::vector<int> unobserved() const;
  void set_unobserved(const std::vector<int>& nodes);
};

// Stages -------------------------------------------------------------------

struct StageLog {
  std::string stage;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;  // -1: no epoch beat the starting parameters
  double best_val = std::numeric_limits<double>::infinity();
  /// Validation loss before any update, with the previous stage's options.
  double initial_val = std::numeric_limits<double>::quiet_NaN();
  std::size_t trainable_params = 0;
  long optimizer_steps = 0;
  /// Epoch seconds of every target step fed to a training or validation batch.
  std::set<std::int64_t> touched_epochs;
};

struct StageResult {
  Checkpoint checkpoint;
  StageLog log;
};

struct DomainStageOptions {
  bool shared_bank = false;
  std::vector<int> hidden_nodes;  // unobserved nodes of the target
};

struct TaskStageOptions {
  bool shared_bank = false;
  bool finetune_all = false;  // no prompts, every parameter trainable
};

StageResult pretrain(const std::vector<std::pair<Graph, SignalTensor>>& sources,
                     const TrainConfig& cfg);

/// Fits domain banks on the target's prompt split, selecting on its
/// validation split. Normalization stats and hidden nodes go to the
/// checkpoint for the later stages.
StageResult fit_domain_prompts(const Graph& graph, const SignalTensor& target,
                               const Checkpoint& pretrained, const TrainConfig& cfg,
                               const DomainStageOptions& opt = {});

StageResult fit_task_prompts(const Graph& graph, const SignalTensor& target,
                             const Checkpoint& domain_prompted, const TaskTemplate& tpl,
                             const TrainConfig& cfg, const TaskStageOptions& opt = {});

// Prediction ---------------------------------------------------------------

struct Prediction {
  std::vector<int> nodes;    // eval grid rows
  std::vector<int> patches;  // eval grid patch indices
  SignalTensor values;       // nodes x (patches * L) x d_x, raw units
  Mat embedding;             // encoder output, (N_u * T_u) x d_h
};

/// Runs the checkpoint on one raw window of T_p * L steps over the full
/// graph. Values at masked cells are ignored. `stats` overrides the
/// checkpoint's normalization.
Prediction predict(Checkpoint& ckpt, const Graph& graph, const SignalTensor& window,
                   const TaskTemplate& tpl, const std::optional<NormStats>& stats = std::nullopt);

}  // namespace stgp
