// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "stgp/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

namespace stgp {

struct Parameter {
  Mat value;
  Mat grad;
  bool trainable = true;
};

/// Named parameter arrays, iterated in lexicographic name order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Mat init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  void erase(const std::string& name) { params_.erase(name); }

  std::map<std::string, Parameter>& items() { return params_; }
  const std::map<std::string, Parameter>& items() const { return params_; }

  void zero_grad();
  void set_trainable(const std::function<bool(const std::string&)>& pred);
  std::size_t count(const std::function<bool(const std::string&)>& pred) const;
  std::size_t trainable_count() const;

 private:
  std::map<std::string, Parameter> params_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual linear-layer default.
Mat init_linear(int fan_in, int fan_out, std::mt19937_64& rng);
Mat init_normal(int rows, int cols, double stddev, std::mt19937_64& rng);

/// Binds named parameters to a tape, once per name.
class Binder {
 public:
  Binder(ad::Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}
  ad::Var operator()(const std::string& name);
  ad::Tape& tape() { return tape_; }
  ParamStore& store() { return store_; }

 private:
  ad::Tape& tape_;
  ParamStore& store_;
  std::map<std::string, ad::Var> bound_;
};

/// AdamW with decoupled weight decay. Only trainable parameters move.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(ParamStore& store, double grad_scale = 1.0);
  void set_lr(double lr) { lr_ = lr; }

 private:
  struct Slot {
    Mat m, v;
  };
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::map<std::string, Slot> slots_;
};

/// Parameter groups used by the staged freezing rules.
bool is_backbone(const std::string& name);   // encoder.* and decoder.*
bool is_head(const std::string& name);       // head.*
bool is_domain_prompt(const std::string& name);
bool is_task_prompt(const std::string& name);
bool is_task_prompt_for(const std::string& name, const std::string& task);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace stgp
