// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace stgp {

/// Flat `key=value` text. Blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

struct ModelConfig {
  int patch_len = 12;    // L
  int channels = 1;      // d_x
  int d_h = 128;
  int heads = 4;
  int layers_t = 4;
  int layers_s = 4;
  int ffn_mult = 4;
  int d_dec = 32;
  int layers_d = 6;
  int kernel = 3;
  int head_hidden1 = 128;
  int head_hidden2 = 256;
  int max_patches = 25;  // rows of the positional tables
  int hop_max = 4;
  int num_prompts = 25;  // N_p
  double phi = 0.5;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  ModelConfig model;

  int num_patches = 25;  // T_p per window
  double mask_ratio = 0.75;

  double lr_pretrain = 1e-3;
  double lr_domain = 5e-3;
  double lr_task = 5e-3;
  double weight_decay = 1e-4;
  int epochs_pretrain = 100;
  int epochs_domain = 50;
  int epochs_task = 50;
  int patience = 10;
  int batch_size = 8;
  int batches_per_epoch = 0;  // 0 = one pass over all windows
  int window_stride = 0;      // 0 = patch_len
  int val_windows = 0;        // 0 = all validation windows
  double grad_clip = 0.0;     // 0 = off
  bool cosine_lr = false;     // cosine decay over each stage's epochs

  bool tune_head = false;
  bool normalize = true;

  double source_train_fraction = 0.8;
  int target_prompt_days = 3;
  int target_val_days = 3;
  int test_stride = 0;  // 0 = non-overlapping windows

  int hist_patches = 24;
  int pred_patches = 1;
  double unobserved_fraction = 1.0 / 3.0;  // 2:1 observed/unobserved
  bool inductive = false;
  int knn_k = 3;

  /// Canonical `key=value` lines, sorted by key. Round-trips through
  /// from_key_values().
  std::string to_text() const;
  std::uint64_t hash() const;

  /// Unknown keys throw std::invalid_argument.
  static TrainConfig from_key_values(const std::map<std::string, std::string>& kv);
  static TrainConfig from_file(const std::filesystem::path& path);

  int stride() const { return window_stride > 0 ? window_stride : model.patch_len; }
  int window_steps() const { return num_patches * model.patch_len; }
  void validate() const;
};

}  // namespace stgp
