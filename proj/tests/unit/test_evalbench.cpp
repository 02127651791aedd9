// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "stgp/evalbench.hpp"
#include "stgp/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stgp;

namespace {

SignalTensor tensor(int nodes, int steps, std::int64_t start, std::int64_t interval, double fill = 0.0) {
  SignalTensor s;
  s.nodes = nodes;
  s.steps = steps;
  s.start_epoch = start;
  s.interval = interval;
  s.channel_names = {"speed"};
  s.values.assign(static_cast<std::size_t>(nodes) * steps, fill);
  return s;
}

Graph graph_from(const Mat& a) {
  Graph g;
  g.num_nodes = static_cast<int>(a.rows());
  g.adjacency = a;
  for (int i = 0; i < g.num_nodes; ++i) g.node_ids.push_back("n" + std::to_string(i));
  return g;
}

TaskTemplate kriging(std::vector<int> unobserved) {
  TaskTemplate t;
  t.kind = TaskKind::Kriging;
  t.unobserved_nodes = std::move(unobserved);
  return t;
}

TaskTemplate forecast(int hist, int pred) {
  TaskTemplate t;
  t.kind = TaskKind::Forecast;
  t.hist_patches = hist;
  t.pred_patches = pred;
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr std::int64_t kMonday = 1704067200;

}  // namespace

TEST_CASE("metrics examples") {
  const Metrics m = metrics({1, 2}, {1, 4});
  CHECK(m.mae == doctest::Approx(1.0));
  CHECK(m.rmse == doctest::Approx(std::sqrt(2.0)));
  CHECK(m.count == 2);
  const Metrics z = metrics({3, 4, 5}, {3, 4, 5});
  CHECK(z.mae == 0.0);
  CHECK(z.rmse == 0.0);
  const Metrics c = metrics({1, 2, 3}, {3.5, 4.5, 5.5});
  CHECK(c.mae == doctest::Approx(2.5));
  CHECK(c.rmse == doctest::Approx(2.5));
  CHECK_THROWS(metrics({}, {}));
  CHECK_THROWS(metrics({1}, {1, 2}));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> a(17), b(17);
    for (int k = 0; k < 17; ++k) {
      a[k] = g(rng);
      b[k] = g(rng);
    }
    const Metrics r = metrics(a, b);
    CHECK(r.rmse >= r.mae);
  }
}

TEST_CASE("historical average") {
  // two days of hourly history; node 0 reads 2 then 4 at 09:00
  SignalTensor hist = tensor(2, 48, kMonday, 3600, 1.0);
  hist.at(0, 9, 0) = 2.0;
  hist.at(0, 33, 0) = 4.0;
  const SignalTensor window = tensor(2, 2, kMonday + 8 * 3600, 3600);
  const Prediction p = baseline_ha(hist, window, forecast(1, 1), 2, 1);
  CHECK(p.nodes == std::vector<int>{0, 1});
  CHECK(p.patches == std::vector<int>{1});
  CHECK(p.values.at(0, 0, 0) == doctest::Approx(3.0));
  CHECK(p.values.at(1, 0, 0) == doctest::Approx(1.0));

  // one observation per slot is returned as is; an empty slot falls back to the node mean
  SignalTensor half = tensor(1, 12, kMonday, 3600);
  for (int t = 0; t < 12; ++t) half.at(0, t, 0) = t == 5 ? 7.0 : 5.0 - (t == 6 ? 2.0 : 0.0);
  const double node_mean = (7.0 + 3.0 + 10 * 5.0) / 12.0;
  const Prediction q = baseline_ha(half, tensor(1, 2, kMonday + 4 * 3600, 3600), forecast(1, 1), 2, 1);
  CHECK(q.values.at(0, 0, 0) == doctest::Approx(7.0));
  const Prediction e = baseline_ha(half, tensor(1, 2, kMonday + 19 * 3600, 3600), forecast(1, 1), 2, 1);
  CHECK(e.values.at(0, 0, 0) == doctest::Approx(node_mean));
}

TEST_CASE("mean and knn") {
  SignalTensor w = tensor(5, 3, kMonday, 300);
  const double obs[3] = {1.0, 2.0, 3.0};
  for (int t = 0; t < 3; ++t) {
    w.at(1, t, 0) = obs[0] + t;
    w.at(2, t, 0) = obs[1] + t;
    w.at(3, t, 0) = obs[2] + t;
    w.at(0, t, 0) = 100.0;  // hidden, ignored
    w.at(4, t, 0) = -100.0;
  }
  const Prediction m = baseline_mean(w, kriging({0, 4}), 3, 1);
  CHECK(m.nodes == std::vector<int>{0, 4});
  for (int a = 0; a < 2; ++a)
    for (int t = 0; t < 3; ++t) CHECK(m.values.at(a, t, 0) == doctest::Approx(2.0 + t));

  // node 0 links to 1 and 2 with equal weight; node 4 links to nothing observed
  Mat adj = Mat::Zero(5, 5);
  adj(0, 1) = adj(1, 0) = 0.6;
  adj(0, 2) = adj(2, 0) = 0.6;
  adj(0, 4) = adj(4, 0) = 0.9;
  for (int t = 0; t < 3; ++t) {
    w.at(1, t, 0) = 4.0;
    w.at(2, t, 0) = 6.0;
  }
  const Prediction k = baseline_knn(graph_from(adj), w, kriging({0, 4}), 3, 1, 2);
  for (int t = 0; t < 3; ++t) {
    CHECK(k.values.at(0, t, 0) == doctest::Approx(5.0));
    CHECK(k.values.at(1, t, 0) == doctest::Approx((4.0 + 6.0 + 3.0 + t) / 3.0));
  }

  // k = 1 keeps the strongest neighbour
  adj(0, 2) = adj(2, 0) = 0.8;
  const Prediction k1 = baseline_knn(graph_from(adj), w, kriging({0, 4}), 3, 1, 1);
  CHECK(k1.values.at(0, 0, 0) == doctest::Approx(6.0));
  CHECK_THROWS(baseline_knn(graph_from(adj), w, kriging({0, 4}), 3, 1, 0));
}

TEST_CASE("future steps read the last visible patch") {
  SignalTensor w = tensor(3, 6, kMonday, 300);
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 6; ++t) w.at(i, t, 0) = 10.0 * i + t;
  TaskTemplate ex;
  ex.kind = TaskKind::Extrapolation;
  ex.hist_patches = 2;
  ex.pred_patches = 1;
  ex.unobserved_nodes = {2};
  const Prediction m = baseline_mean(w, ex, 3, 2);
  CHECK(m.nodes == std::vector<int>{2});
  CHECK(m.patches == std::vector<int>{2});
  // steps 4, 5 are hidden; offsets 0, 1 of patch 1 are steps 2, 3
  CHECK(m.values.at(0, 0, 0) == doctest::Approx((2.0 + 12.0) / 2.0));
  CHECK(m.values.at(0, 1, 0) == doctest::Approx((3.0 + 13.0) / 2.0));
}

TEST_CASE("generator determinism and shift") {
  SynthSpec spec;
  spec.num_nodes = 8;
  spec.num_sources = 2;
  spec.source_days = 2;
  spec.target_days = 2;
  spec.seed = 5;
  const SynthDataset a = generate_synthetic(spec);
  const SynthDataset b = generate_synthetic(spec);
  REQUIRE(a.sources.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a.sources[k].second.values == b.sources[k].second.values);
    CHECK(a.sources[k].first.adjacency == b.sources[k].first.adjacency);
  }
  CHECK(a.target.second.values == b.target.second.values);
  spec.seed = 6;
  CHECK(generate_synthetic(spec).target.second.values != a.target.second.values);

  // edge weights lie in [0, 1] and the graph is connected
  const Graph& g = a.target.first;
  CHECK(g.adjacency.minCoeff() >= 0.0);
  CHECK(g.adjacency.maxCoeff() <= 1.0);
  for (int i = 0; i < g.num_nodes; ++i) CHECK(g.adjacency(i, i) == 0.0);
  CHECK((hop_distances(g.adjacency).array() >= 0).all());
}

TEST_CASE("domain distance grows with the phase shift") {
  SynthSpec spec;
  spec.num_sources = 3;
  spec.source_days = 4;
  spec.target_days = 4;
  spec.seed = 2;
  std::vector<SignalTensor> sources;
  for (const auto& [g, s] : generate_synthetic(spec).sources) sources.push_back(s);
  double prev = -1.0;
  for (double phase : {0.0, 2.0, 4.0}) {
    const auto target = generate_domain(spec, 99, spec.target_days, DomainShift{1.0, phase, 1.0});
    const double d = distribution_distance(sources, target.second);
    CHECK(d > prev);
    prev = d;
  }
  double prev_s = -1.0;
  for (double scale : {1.0, 0.9, 0.8}) {
    const auto target = generate_domain(spec, 99, spec.target_days, DomainShift{scale, 0.0, 1.0});
    const double d = distribution_distance(sources, target.second);
    CHECK(d > prev_s);
    prev_s = d;
  }
}

TEST_CASE("null shift keeps the marginals") {
  SynthSpec spec;
  spec.seed = 4;
  spec.target = DomainShift{1.0, 0.0, 1.0};
  const SynthDataset d = generate_synthetic(spec);
  auto moments = [](const SignalTensor& s) {
    double m = 0.0, v = 0.0;
    for (double x : s.values) m += x;
    m /= static_cast<double>(s.values.size());
    for (double x : s.values) v += (x - m) * (x - m);
    return std::pair{m, std::sqrt(v / static_cast<double>(s.values.size()))};
  };
  double sm = 0.0, ss = 0.0;
  for (const auto& [g, s] : d.sources) {
    const auto [m, sd] = moments(s);
    sm += m / d.sources.size();
    ss += sd / d.sources.size();
  }
  const auto [tm, tsd] = moments(d.target.second);
  // baselines are drawn per node, so the means differ by sampling noise only
  CHECK(std::abs(tm - sm) < 3.0 * spec.base_spread / std::sqrt(spec.num_nodes));
  CHECK(std::abs(tsd / ss - 1.0) < 0.15);

  spec.target = DomainShift{0.85, 3.0, 1.3};
  const SynthDataset shifted = generate_synthetic(spec);
  CHECK(std::abs(moments(shifted.target.second).first - sm) > 5.0);
}

TEST_CASE("parameter accounting") {
  const ParamAccounting a = param_accounting(ModelConfig{});
  CHECK(a.domain_stage == 6400);
  CHECK(a.task_stage == 6400);
  CHECK(a.formula == 6400);
  CHECK(a.task_stage_with_head > a.task_stage);
  CHECK(a.published_reference == 3e3);
}

TEST_CASE("experiment reports are reproducible") {
  SynthSpec spec;
  spec.num_nodes = 6;
  spec.num_sources = 2;
  spec.source_days = 2;
  spec.target_days = 3;
  spec.seed = 3;
  const SynthDataset data = generate_synthetic(spec);
  TrainConfig cfg;
  cfg.model.d_h = 8;
  cfg.model.heads = 2;
  cfg.model.layers_t = cfg.model.layers_s = cfg.model.layers_d = 1;
  cfg.model.ffn_mult = 2;
  cfg.model.d_dec = 8;
  cfg.model.head_hidden1 = cfg.model.head_hidden2 = 8;
  cfg.model.num_prompts = 4;
  cfg.num_patches = 4;
  cfg.hist_patches = 3;
  cfg.epochs_pretrain = cfg.epochs_domain = cfg.epochs_task = 1;
  cfg.batches_per_epoch = 2;
  cfg.window_stride = 48;
  cfg.val_windows = 2;
  cfg.target_prompt_days = 1;
  cfg.target_val_days = 1;

  const ExperimentResult r1 = run_experiment(data, cfg);
  const ExperimentResult r2 = run_experiment(data, cfg);
  CHECK(r1.errors.empty());
  CHECK(r1.isolation_ok);
  CHECK(format_report(r1.kv) == format_report(r2.kv));
  CHECK(metrics_csv(r1.rows) == metrics_csv(r2.rows));
  CHECK(std::isfinite(find_mae(r1.rows, "forecast", "stgp")));
  CHECK(std::isfinite(find_mae(r1.rows, "forecast", "ha")));
  for (const char* task : {"kriging", "extrapolation"}) {
    CHECK(std::isfinite(find_mae(r1.rows, task, "mean")));
    CHECK(std::isfinite(find_mae(r1.rows, task, "knn")));
  }
  for (const MetricRow& row : r1.rows) CHECK(row.m.rmse >= row.m.mae);
  CHECK(r1.kv.at("params.stage.domain") == std::to_string(2 * 4 * 8));
  CHECK(r1.kv.at("params.reference.formula_2_np_dh") == "6400");
  CHECK(r1.kv.at("params.stage.task.extrapolation") != r1.kv.at("params.stage.task.forecast"));

  const auto dir = std::filesystem::temp_directory_path() / "stgp_test_report";
  std::filesystem::remove_all(dir);
  write_experiment(dir / "a", r1);
  write_experiment(dir / "b", r2);
  for (const char* f : {"report.txt", "metrics.csv", "table.txt", "embeddings.csv"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  CHECK(read_report(dir / "a" / "report.txt") == r1.kv);
  const MergedReport merged = merge_reports({dir / "a", dir / "b"});
  CHECK(find_mae(merged.rows, "forecast", "stgp") == doctest::Approx(find_mae(r1.rows, "forecast", "stgp")));
  std::filesystem::remove_all(dir);
}
