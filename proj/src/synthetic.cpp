// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/synthetic.hpp"

#include "stgp/config.hpp"
#include "stgp/params.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>

namespace stgp {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t mix(std::uint64_t seed, const std::string& tag, std::uint64_t k = 0) {
  return fnv1a64(std::to_string(seed) + "/" + tag + "/" + std::to_string(k));
}

}  // namespace

SynthSpec SynthSpec::from_key_values(const std::map<std::string, std::string>& kv) {
  SynthSpec s;
  for (const auto& [k, v] : kv) {
    if (k == "num_nodes") s.num_nodes = std::stoi(v);
    else if (k == "num_sources") s.num_sources = std::stoi(v);
    else if (k == "source_days") s.source_days = std::stoi(v);
    else if (k == "target_days") s.target_days = std::stoi(v);
    else if (k == "interval") s.interval = std::stoll(v);
    else if (k == "start_epoch") s.start_epoch = std::stoll(v);
    else if (k == "radius") s.radius = std::stod(v);
    else if (k == "base_speed") s.base_speed = std::stod(v);
    else if (k == "base_spread") s.base_spread = std::stod(v);
    else if (k == "amplitude") s.amplitude = std::stod(v);
    else if (k == "ar_rho") s.ar_rho = std::stod(v);
    else if (k == "noise_std") s.noise_std = std::stod(v);
    else if (k == "obs_noise") s.obs_noise = std::stod(v);
    else if (k == "source_phase_spread") s.source_phase_spread = std::stod(v);
    else if (k == "speed_scale") s.target.speed_scale = std::stod(v);
    else if (k == "phase_shift") s.target.phase_shift = std::stod(v);
    else if (k == "noise_scale") s.target.noise_scale = std::stod(v);
    else if (k == "seed") s.seed = std::stoull(v);
    else throw std::invalid_argument("unknown synthetic spec key: " + k);
  }
  if (s.num_nodes < 2 || s.num_sources < 1 || s.source_days < 1 || s.target_days < 1 ||
      s.interval <= 0 || s.radius <= 0.0) {
    throw std::invalid_argument("synthetic spec: sizes must be positive");
  }
  if (!(s.target.speed_scale > 0.0) || !(s.target.noise_scale > 0.0)) {
    throw std::invalid_argument("synthetic spec: scales must be positive");
  }
  return s;
}

SynthSpec SynthSpec::from_file(const std::filesystem::path& path) {
  return from_key_values(read_key_value_file(path));
}

std::string SynthSpec::to_text() const {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "amplitude=%.17g\nar_rho=%.17g\nbase_speed=%.17g\nbase_spread=%.17g\ninterval=%lld\nnoise_scale=%.17g\n"
                "noise_std=%.17g\nnum_nodes=%d\nnum_sources=%d\nobs_noise=%.17g\nphase_shift=%.17g\n"
                "radius=%.17g\nseed=%llu\nsource_days=%d\nsource_phase_spread=%.17g\nspeed_scale=%.17g\nstart_epoch=%lld\n"
                "target_days=%d\n",
                amplitude, ar_rho, base_speed, base_spread, static_cast<long long>(interval), target.noise_scale,
                noise_std, num_nodes, num_sources, obs_noise, target.phase_shift, radius,
                static_cast<unsigned long long>(seed), source_days, source_phase_spread, target.speed_scale,
                static_cast<long long>(start_epoch), target_days);
  return buf;
}

std::pair<Graph, SignalTensor> generate_domain(const SynthSpec& spec, std::uint64_t domain_seed,
                                               int days, const DomainShift& shift) {
  std::mt19937_64 rng(domain_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = spec.num_nodes;

  std::vector<double> px(n), py(n);
  for (int i = 0; i < n; ++i) {
    px[i] = u(rng);
    py[i] = u(rng);
  }
  // grow the radius past spec.radius until the graph is connected
  std::vector<std::pair<double, std::pair<int, int>>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.push_back({std::hypot(px[i] - px[j], py[i] - py[j]), {i, j}});
  std::sort(pairs.begin(), pairs.end());
  std::vector<int> root(n);
  std::iota(root.begin(), root.end(), 0);
  std::function<int(int)> find = [&](int x) { return root[x] == x ? x : root[x] = find(root[x]); };
  double radius = spec.radius;
  int components = n;
  for (const auto& [dist, ij] : pairs) {
    if (components == 1 && dist > radius) break;
    const int a = find(ij.first), b = find(ij.second);
    if (a != b) {
      root[a] = b;
      --components;
      radius = std::max(radius, dist);
    }
  }

  Graph g;
  g.num_nodes = n;
  g.adjacency = Mat::Zero(n, n);
  const double sigma = radius / 1.5;
  for (int i = 0; i < n; ++i) {
    g.node_ids.push_back("n" + std::to_string(i));
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = std::hypot(px[i] - px[j], py[i] - py[j]);
      if (d <= radius) g.adjacency(i, j) = std::exp(-(d * d) / (sigma * sigma));
    }
  }

  std::vector<double> base(n);
  for (int i = 0; i < n; ++i) base[i] = spec.base_speed + spec.base_spread * gauss(rng);

  // row-normalized (I + A) spreads the AR innovations over neighbours
  Mat w = g.adjacency + Mat::Identity(n, n);
  for (int i = 0; i < n; ++i) w.row(i) /= w.row(i).sum();
  Eigen::VectorXd gain(n);
  for (int i = 0; i < n; ++i) gain(i) = 1.0 / w.row(i).norm();

  const int per_day = static_cast<int>(86400 / spec.interval);
  const int steps = days * per_day;
  SignalTensor s;
  s.nodes = n;
  s.steps = steps;
  s.channels = 1;
  s.start_epoch = spec.start_epoch;
  s.interval = spec.interval;
  s.channel_names = {"speed"};
  s.values.assign(static_cast<std::size_t>(n) * steps, 0.0);

  const double rho = spec.ar_rho;
  const double innov = std::sqrt(1.0 - rho * rho) * spec.noise_std;
  Eigen::VectorXd e(n);
  for (int i = 0; i < n; ++i) e(i) = spec.noise_std * gauss(rng);
  for (int t = 0; t < steps; ++t) {
    if (t > 0)
      for (int i = 0; i < n; ++i) e(i) = rho * e(i) + innov * gauss(rng);
    const Eigen::VectorXd diffused = (w * e).cwiseProduct(gain);
    const std::int64_t ts = spec.start_epoch + static_cast<std::int64_t>(t) * spec.interval;
    const std::int64_t day = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
    const double hour = static_cast<double>(ts - day * 86400) / 3600.0;
    const double daily = spec.amplitude * std::sin(2 * kPi * (hour - 8.0 - shift.phase_shift) / 24.0);
    for (int i = 0; i < n; ++i) {
      const double noise = diffused(i) + spec.obs_noise * gauss(rng);
      s.at(i, t, 0) = shift.speed_scale * (base[i] + daily + shift.noise_scale * noise);
    }
  }
  return {g, s};
}

SynthDataset generate_synthetic(const SynthSpec& spec) {
  SynthDataset d;
  for (int k = 0; k < spec.num_sources; ++k) {
    DomainShift shift;
    if (spec.num_sources > 1)
      shift.phase_shift = spec.source_phase_spread * (2.0 * k / (spec.num_sources - 1) - 1.0);
    d.sources.push_back(generate_domain(spec, mix(spec.seed, "source", k), spec.source_days, shift));
  }
  d.target = generate_domain(spec, mix(spec.seed, "target"), spec.target_days, spec.target);
  return d;
}

double distribution_distance(const std::vector<SignalTensor>& sources, const SignalTensor& target) {
  if (sources.empty()) throw std::invalid_argument("distribution_distance: no sources");
  auto profile = [](const SignalTensor& s) {
    std::vector<double> sum(24 * s.channels, 0.0), cnt(24 * s.channels, 0.0);
    for (int t = 0; t < s.steps; ++t) {
      const std::int64_t ts = s.start_epoch + static_cast<std::int64_t>(t) * s.interval;
      const int h = static_cast<int>(((ts % 86400) + 86400) % 86400 / 3600);
      for (int i = 0; i < s.nodes; ++i)
        for (int c = 0; c < s.channels; ++c) {
          sum[h * s.channels + c] += s.at(i, t, c);
          cnt[h * s.channels + c] += 1.0;
        }
    }
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = cnt[k] > 0 ? sum[k] / cnt[k] : 0.0;
    return sum;
  };
  std::vector<double> ref(24 * target.channels, 0.0);
  for (const SignalTensor& s : sources) {
    if (s.channels != target.channels) throw std::invalid_argument("distribution_distance: channels");
    const auto p = profile(s);
    for (std::size_t k = 0; k < ref.size(); ++k) ref[k] += p[k] / sources.size();
  }
  const auto tp = profile(target);
  double d = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) d += std::abs(tp[k] - ref[k]);
  return d / static_cast<double>(ref.size());
}

}  // namespace stgp
