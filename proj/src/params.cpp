// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/params.hpp"

#include <cmath>
#include <stdexcept>

namespace stgp {

Parameter& ParamStore::add(const std::string& name, Mat init) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw std::invalid_argument("duplicate parameter: " + name);
  it->second.value = std::move(init);
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.resize(0, 0);
}

void ParamStore::set_trainable(const std::function<bool(const std::string&)>& pred) {
  for (auto& [name, p] : params_) p.trainable = pred(name);
}

std::size_t ParamStore::count(const std::function<bool(const std::string&)>& pred) const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_)
    if (pred(name)) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_)
    if (p.trainable) n += static_cast<std::size_t>(p.value.size());
  return n;
}

ad::Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  ad::Var v = tape_.param(store_.at(name));
  bound_.emplace(name, v);
  return v;
}

Mat init_linear(int fan_in, int fan_out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Mat init_normal(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void AdamW::step(ParamStore& store, double grad_scale) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (auto& [name, p] : store.items()) {
    if (!p.trainable || p.grad.size() == 0) continue;
    Slot& s = slots_[name];
    if (s.m.size() == 0) {
      s.m = Mat::Zero(p.value.rows(), p.value.cols());
      s.v = Mat::Zero(p.value.rows(), p.value.cols());
    }
    const Mat gr = p.grad * grad_scale;
    s.m = b1_ * s.m + (1.0 - b1_) * gr;
    s.v = b2_ * s.v + (1.0 - b2_) * gr.cwiseProduct(gr);
    p.value *= (1.0 - lr_ * wd_);
    p.value.array() -= lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }
}

namespace {
bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }
}  // namespace

bool is_backbone(const std::string& name) {
  return starts_with(name, "encoder.") || starts_with(name, "decoder.");
}
bool is_head(const std::string& name) { return starts_with(name, "head."); }
bool is_domain_prompt(const std::string& name) { return starts_with(name, "domain."); }
bool is_task_prompt(const std::string& name) { return starts_with(name, "task."); }
bool is_task_prompt_for(const std::string& name, const std::string& task) {
  return starts_with(name, ("task." + task + ".").c_str());
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace stgp
