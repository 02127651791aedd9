// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: dataset generation, the three training stages,
// evaluation, baselines, experiments and report merging.

#include "CLI11.hpp"
#include "stgp/evalbench.hpp"
#include "stgp/pipeline.hpp"
#include "stgp/report.hpp"
#include "stgp/synthetic.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace stgp;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c, bool multi_data = false) {
  app->add_option("--config", c.config, "key=value training config");
  if (multi_data) {
    app->add_option("--data", c.data, "dataset meta file or directory (repeatable)")->required();
  } else {
    app->add_option("--data", c.data, "dataset meta file or directory")->required()->expected(1);
  }
  app->add_option("--seed", c.seed, "override the config seed");
}

TrainConfig load_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : TrainConfig::from_file(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::pair<Graph, SignalTensor> load(const std::string& p) {
  fs::path path(p);
  if (fs::is_directory(path)) path /= "meta.json";
  return load_dataset(path);
}

void write_log(const fs::path& dir, const StageLog& log) {
  fs::create_directories(dir);
  std::ofstream out(dir / "stage_log.csv");
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t k = 0; k < log.val_loss.size(); ++k)
    out << k << "," << log.train_loss[k] << "," << log.val_loss[k] << "\n";
  std::ofstream svg(dir / ("loss_" + log.stage + ".svg"));
  svg << loss_curve_svg(log);
  std::cout << log.stage << ": best epoch " << log.best_epoch << ", validation " << log.best_val;
  if (!std::isnan(log.initial_val)) std::cout << " (before: " << log.initial_val << ")";
  std::cout << ", trainable " << log.trainable_params << "\n";
}

TaskTemplate template_for(const Checkpoint& ck, TaskKind kind, const TrainConfig& cfg,
                          int nodes) {
  std::vector<int> u = ck.unobserved();
  if (u.empty()) u = choose_unobserved(nodes, cfg.unobserved_fraction, cfg.seed);
  return make_template(kind, cfg, u);
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal graph prompting: pretrain, prompt, evaluate"};
  app.require_subcommand(1);

  // generate
  std::string spec_path, gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("generate", "write a synthetic multi-domain benchmark");
  gen->add_option("--spec", spec_path, "key=value synthetic spec");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "override the spec seed");

  // pretrain
  Common pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "masked pre-training on source datasets");
  add_common(pre_cmd, pre, true);
  pre_cmd->add_option("--out", pre.out, "checkpoint directory")->required();

  // prompt-domain
  Common dom;
  std::string dom_from;
  bool dom_shared = false;
  auto* dom_cmd = app.add_subcommand("prompt-domain", "fit domain prompts on a target dataset");
  add_common(dom_cmd, dom);
  dom_cmd->add_option("--from", dom_from, "pretrained checkpoint")->required();
  dom_cmd->add_option("--out", dom.out, "checkpoint directory")->required();
  dom_cmd->add_flag("--shared-bank", dom_shared, "one bank for both encoder branches");

  // prompt-task
  Common tsk;
  std::string tsk_from, tsk_name;
  bool inductive = false, tune_head = false, tsk_shared = false;
  auto* tsk_cmd = app.add_subcommand("prompt-task", "fit task prompts for one downstream task");
  add_common(tsk_cmd, tsk);
  tsk_cmd->add_option("--from", tsk_from, "domain-prompted checkpoint")->required();
  tsk_cmd->add_option("--out", tsk.out, "checkpoint directory")->required();
  tsk_cmd->add_option("--task", tsk_name, "forecast|kriging|extrapolation")
      ->required()
      ->check(CLI::IsMember({"forecast", "kriging", "extrapolation"}));
  tsk_cmd->add_flag("--inductive", inductive, "remove unobserved nodes until prediction");
  tsk_cmd->add_flag("--tune-head", tune_head, "also train the prediction head");
  tsk_cmd->add_flag("--shared-bank", tsk_shared, "one bank for masked and unmasked cells");

  // eval
  std::string ev_ckpt, ev_data, ev_task, ev_report;
  auto* ev_cmd = app.add_subcommand("eval", "score a checkpoint on the target test split");
  ev_cmd->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
  ev_cmd->add_option("--data", ev_data, "target dataset")->required();
  ev_cmd->add_option("--task", ev_task, "forecast|kriging|extrapolation")
      ->required()
      ->check(CLI::IsMember({"forecast", "kriging", "extrapolation"}));
  ev_cmd->add_option("--report", ev_report, "report directory")->required();

  // baseline
  Common bl;
  std::string bl_method, bl_task = "forecast", bl_report;
  auto* bl_cmd = app.add_subcommand("baseline", "score a statistical baseline");
  add_common(bl_cmd, bl);
  bl_cmd->add_option("--method", bl_method, "ha|mean|knn")
      ->required()
      ->check(CLI::IsMember({"ha", "mean", "knn"}));
  bl_cmd->add_option("--task", bl_task, "forecast|kriging|extrapolation")
      ->check(CLI::IsMember({"forecast", "kriging", "extrapolation"}));
  bl_cmd->add_option("--report", bl_report, "report directory")->required();

  // report
  std::vector<std::string> merge_dirs;
  std::string merge_out;
  auto* rep_cmd = app.add_subcommand("report", "merge per-seed reports into medians");
  rep_cmd->add_option("--merge", merge_dirs, "report directories")->required();
  rep_cmd->add_option("--out", merge_out, "merged report directory")->required();

  // experiment
  std::string ex_config, ex_spec, ex_out, ex_seeds = "0,1,2", ex_ablations, ex_tasks;
  auto* ex_cmd = app.add_subcommand("experiment", "full synthetic benchmark over several seeds");
  ex_cmd->add_option("--config", ex_config, "key=value training config");
  ex_cmd->add_option("--spec", ex_spec, "key=value synthetic spec");
  ex_cmd->add_option("--seeds", ex_seeds, "comma-separated seeds");
  ex_cmd->add_option("--ablations", ex_ablations, "comma-separated subset of ft,sdp,stp");
  ex_cmd->add_option("--tasks", ex_tasks, "comma-separated subset of forecast,kriging,extrapolation");
  ex_cmd->add_option("--out", ex_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      SynthSpec spec = spec_path.empty() ? SynthSpec{} : SynthSpec::from_file(spec_path);
      if (gen_seed) spec.seed = *gen_seed;
      const SynthDataset d = generate_synthetic(spec);
      for (std::size_t k = 0; k < d.sources.size(); ++k)
        save_dataset(fs::path(gen_out) / ("source_" + std::to_string(k)), d.sources[k].first,
                     d.sources[k].second);
      save_dataset(fs::path(gen_out) / "target", d.target.first, d.target.second);
      std::ofstream(fs::path(gen_out) / "spec.txt") << spec.to_text();
      std::vector<SignalTensor> src;
      for (const auto& s : d.sources) src.push_back(s.second);
      std::cout << "wrote " << d.sources.size() << " sources and a target to " << gen_out
                << "; profile distance " << distribution_distance(src, d.target.second) << "\n";
    } else if (*pre_cmd) {
      const TrainConfig cfg = load_config(pre);
      std::vector<std::pair<Graph, SignalTensor>> sources;
      for (const auto& p : pre.data) sources.push_back(load(p));
      StageResult r = pretrain(sources, cfg);
      r.checkpoint.save(pre.out);
      write_log(pre.out, r.log);
    } else if (*dom_cmd) {
      const TrainConfig cfg = load_config(dom);
      const auto [g, s] = load(dom.data.front());
      const Checkpoint base = Checkpoint::load(dom_from);
      DomainStageOptions opt;
      opt.shared_bank = dom_shared;
      opt.hidden_nodes = choose_unobserved(g.num_nodes, cfg.unobserved_fraction, cfg.seed);
      StageResult r = fit_domain_prompts(g, s, base, cfg, opt);
      r.checkpoint.save(dom.out);
      write_log(dom.out, r.log);
    } else if (*tsk_cmd) {
      TrainConfig cfg = load_config(tsk);
      if (inductive) cfg.inductive = true;
      if (tune_head) cfg.tune_head = true;
      const auto [g, s] = load(tsk.data.front());
      const Checkpoint base = Checkpoint::load(tsk_from);
      const TaskTemplate tpl = template_for(base, parse_task(tsk_name), cfg, g.num_nodes);
      TaskStageOptions opt;
      opt.shared_bank = tsk_shared;
      StageResult r = fit_task_prompts(g, s, base, tpl, cfg, opt);
      r.checkpoint.save(tsk.out);
      write_log(tsk.out, r.log);
    } else if (*ev_cmd) {
      Checkpoint ck = Checkpoint::load(ev_ckpt);
      const TrainConfig& cfg = ck.config;
      const auto [g, s] = load(ev_data);
      const TaskTemplate tpl = template_for(ck, parse_task(ev_task), cfg, g.num_nodes);
      const TargetSplit split = split_target(s, cfg.target_prompt_days, cfg.target_val_days);
      const int window = cfg.window_steps();
      const EvalOutcome e = evaluate([&](const SignalTensor& w) { return predict(ck, g, w, tpl); },
                                     split.test, window, cfg.test_stride > 0 ? cfg.test_stride : window);
      ExperimentResult res;
      res.rows.push_back({ev_task, "stgp", "avg", e.overall});
      if (ev_task == "forecast")
        for (int h : {3, 6, 12})
          if (e.horizon.count(h)) res.rows.push_back({ev_task, "stgp", std::to_string(h), e.horizon.at(h)});
      res.kv["stage"] = ck.stage;
      res.kv["windows"] = std::to_string(e.windows);
      for (const MetricRow& r : res.rows) {
        res.kv["metric." + r.task + "." + r.method + "." + r.horizon + ".mae"] = std::to_string(r.m.mae);
        res.kv["metric." + r.task + "." + r.method + "." + r.horizon + ".rmse"] = std::to_string(r.m.rmse);
      }
      res.embedding = e.first_embedding;
      write_experiment(ev_report, res);
      std::cout << render_table(res.rows);
    } else if (*bl_cmd) {
      const TrainConfig cfg = load_config(bl);
      const auto [g, s] = load(bl.data.front());
      const TaskKind kind = parse_task(bl_task);
      const TaskTemplate tpl = make_template(
          kind, cfg, choose_unobserved(g.num_nodes, cfg.unobserved_fraction, cfg.seed));
      const TargetSplit split = split_target(s, cfg.target_prompt_days, cfg.target_val_days);
      const int T_p = cfg.num_patches, L = cfg.model.patch_len, window = cfg.window_steps();
      Predictor p;
      if (bl_method == "ha") {
        p = [&](const SignalTensor& w) { return baseline_ha(split.prompt, w, tpl, T_p, L); };
      } else if (bl_method == "mean") {
        p = [&](const SignalTensor& w) { return baseline_mean(w, tpl, T_p, L); };
      } else {
        p = [&](const SignalTensor& w) { return baseline_knn(g, w, tpl, T_p, L, cfg.knn_k); };
      }
      const EvalOutcome e = evaluate(p, split.test, window, cfg.test_stride > 0 ? cfg.test_stride : window);
      ExperimentResult res;
      res.rows.push_back({bl_task, bl_method, "avg", e.overall});
      for (const MetricRow& r : res.rows) {
        res.kv["metric." + r.task + "." + r.method + "." + r.horizon + ".mae"] = std::to_string(r.m.mae);
        res.kv["metric." + r.task + "." + r.method + "." + r.horizon + ".rmse"] = std::to_string(r.m.rmse);
      }
      write_experiment(bl_report, res);
      std::cout << render_table(res.rows);
    } else if (*rep_cmd) {
      std::vector<fs::path> dirs(merge_dirs.begin(), merge_dirs.end());
      const MergedReport m = merge_reports(dirs);
      write_merged(merge_out, m);
      std::cout << render_table(m.rows);
    } else if (*ex_cmd) {
      TrainConfig base = ex_config.empty() ? TrainConfig{} : TrainConfig::from_file(ex_config);
      SynthSpec spec = ex_spec.empty() ? SynthSpec{} : SynthSpec::from_file(ex_spec);
      ExperimentOptions opt;
      std::stringstream ss(ex_ablations);
      for (std::string a; std::getline(ss, a, ',');)
        if (!a.empty()) opt.ablations.push_back(a);
      if (!ex_tasks.empty()) {
        opt.tasks.clear();
        std::stringstream ts(ex_tasks);
        for (std::string t; std::getline(ts, t, ',');)
          if (!t.empty()) opt.tasks.push_back(parse_task(t));
      }
      const auto started = std::chrono::steady_clock::now();
      opt.progress = [started](const std::string& m) {
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        std::cerr << "  [" << static_cast<int>(sec) << " s] " << m << "\n";
      };
      std::vector<fs::path> dirs;
      for (std::uint64_t seed : parse_seeds(ex_seeds)) {
        const auto t0 = std::chrono::steady_clock::now();
        TrainConfig cfg = base;
        cfg.seed = seed;
        SynthSpec sp = spec;
        sp.seed = seed;
        std::cerr << "seed " << seed << "\n";
        const ExperimentResult res = run_experiment(generate_synthetic(sp), cfg, opt);
        const fs::path dir = fs::path(ex_out) / ("seed_" + std::to_string(seed));
        write_experiment(dir, res);
        dirs.push_back(dir);
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "seed " << seed << " done in " << sec << " s\n" << render_table(res.rows);
        for (const auto& e : res.errors) std::cerr << "error: " << e << "\n";
      }
      const MergedReport m = merge_reports(dirs);
      write_merged(fs::path(ex_out) / "merged", m);
      std::cout << render_table(m.rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
