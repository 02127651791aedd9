// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/pipeline.hpp"

#include "stgp/prompting.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace stgp {

static_assert(std::endian::native == std::endian::little, "checkpoints assume little-endian hosts");

std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Pretrain: return "pretrain";
    case TaskKind::Forecast: return "forecast";
    case TaskKind::Kriging: return "kriging";
    case TaskKind::Extrapolation: return "extrapolation";
  }
  return "unknown";
}

TaskKind parse_task(const std::string& name) {
  if (name == "pretrain") return TaskKind::Pretrain;
  if (name == "forecast") return TaskKind::Forecast;
  if (name == "kriging") return TaskKind::Kriging;
  if (name == "extrapolation") return TaskKind::Extrapolation;
  throw std::invalid_argument("unknown task: " + name);
}

namespace {

bool spatial_task(TaskKind k) { return k == TaskKind::Kriging || k == TaskKind::Extrapolation; }

std::vector<int> last_steps(int patches, int count) {
  std::vector<int> out;
  for (int t = patches - count; t < patches; ++t) out.push_back(t);
  return out;
}

std::vector<int> complement(int n, const std::vector<int>& drop) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (!std::binary_search(drop.begin(), drop.end(), i)) out.push_back(i);
  return out;
}

std::vector<int> sorted(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<Cell> cross(const std::vector<int>& nodes, const std::vector<int>& steps) {
  std::vector<Cell> out;
  for (int i : nodes)
    for (int t : steps) out.push_back({i, t});
  return out;
}

std::uint64_t stage_seed(std::uint64_t seed, const std::string& tag) {
  return seed ^ fnv1a64(tag);
}

std::mt19937_64 seeded(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

void TaskTemplate::validate(int nodes, int patches) const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("task template: " + m); };
  if (kind == TaskKind::Forecast || kind == TaskKind::Extrapolation) {
    if (hist_patches < 1 || pred_patches < 1) fail("hist and pred patches must be positive");
    if (hist_patches + pred_patches != patches) fail("hist + pred must equal the patch count");
  }
  if (spatial_task(kind)) {
    if (unobserved_nodes.empty()) fail("no unobserved nodes");
    const auto u = sorted(unobserved_nodes);
    if (static_cast<int>(u.size()) >= nodes) fail("every node is unobserved");
    if (u.front() < 0 || u.back() >= nodes) fail("unobserved node out of range");
  }
  if (kind == TaskKind::Pretrain && !(total_ratio >= 0.0 && total_ratio < 1.0)) {
    fail("mask ratio must lie in [0, 1)");
  }
}

TaskTemplate make_template(TaskKind kind, const TrainConfig& cfg,
                           const std::vector<int>& unobserved) {
  TaskTemplate t;
  t.kind = kind;
  t.total_ratio = cfg.mask_ratio;
  t.hist_patches = cfg.hist_patches;
  t.pred_patches = cfg.pred_patches;
  if (spatial_task(kind)) t.unobserved_nodes = unobserved;
  t.inductive = cfg.inductive && spatial_task(kind);
  return t;
}

std::vector<int> choose_unobserved(int nodes, double fraction, std::uint64_t seed) {
  const int k = std::clamp(round_half_up(nodes * fraction), 1, std::max(1, nodes - 1));
  std::vector<int> idx(nodes);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng = seeded(seed, fnv1a64("unobserved"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  return sorted(idx);
}

MaskSpec task_mask(const TaskTemplate& tpl, int nodes, int patches, std::mt19937_64* rng) {
  tpl.validate(nodes, patches);
  switch (tpl.kind) {
    case TaskKind::Pretrain:
      if (!rng) throw std::invalid_argument("task_mask: random mask needs a generator");
      return sample_random_mask(nodes, patches, tpl.total_ratio, *rng);
    case TaskKind::Forecast:
      return make_mask(nodes, patches, {}, last_steps(patches, tpl.pred_patches));
    case TaskKind::Kriging:
      return make_mask(nodes, patches, sorted(tpl.unobserved_nodes), {});
    case TaskKind::Extrapolation: {
      const auto u = sorted(tpl.unobserved_nodes);
      const auto f = last_steps(patches, tpl.pred_patches);
      return make_mask(nodes, patches, u, f, cross(u, f));
    }
  }
  throw std::invalid_argument("task_mask: unknown kind");
}

MaskSpec training_mask(const TaskTemplate& tpl, int nodes, int patches,
                       const std::vector<int>& hidden, double pseudo_fraction,
                       std::mt19937_64& rng) {
  if (!spatial_task(tpl.kind)) return task_mask(tpl, nodes, patches, &rng);
  const auto h = sorted(hidden);
  std::vector<int> observed = complement(nodes, h);
  const int n_obs = static_cast<int>(observed.size());
  if (n_obs < 2) throw std::invalid_argument("training_mask: too few observed nodes");
  const int k = std::clamp(round_half_up(n_obs * pseudo_fraction), 1, n_obs - 1);
  std::shuffle(observed.begin(), observed.end(), rng);
  std::vector<int> pseudo(observed.begin(), observed.begin() + k);
  pseudo = sorted(pseudo);
  std::vector<int> ms = h;
  ms.insert(ms.end(), pseudo.begin(), pseudo.end());
  std::vector<int> steps;
  if (tpl.kind == TaskKind::Extrapolation) steps = last_steps(patches, tpl.pred_patches);
  std::vector<int> all(patches);
  std::iota(all.begin(), all.end(), 0);
  return make_mask(nodes, patches, ms, steps,
                   cross(pseudo, tpl.kind == TaskKind::Extrapolation ? steps : all));
}

MaskSpec random_mask_with_hidden(int nodes, int patches, double total_ratio,
                                 const std::vector<int>& hidden, std::mt19937_64& rng) {
  const auto h = sorted(hidden);
  const auto observed = complement(nodes, h);
  MaskSpec sub = sample_random_mask(static_cast<int>(observed.size()), patches, total_ratio, rng);
  std::vector<int> ms = h;
  for (int i : sub.masked_nodes) ms.push_back(observed[i]);
  return make_mask(nodes, patches, ms, sub.masked_steps);
}

// Splits ---------------------------------------------------------------------

SourceSplit split_source(const SignalTensor& s, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  }
  const int cut = static_cast<int>(std::floor(s.steps * train_fraction));
  return {s.slice_steps(0, cut), s.slice_steps(cut, s.steps)};
}

TargetSplit split_target(const SignalTensor& s, int prompt_days, int val_days) {
  if (86400 % s.interval != 0) throw DataError("interval must divide a day");
  const int per_day = static_cast<int>(86400 / s.interval);
  const int a = prompt_days * per_day;
  const int b = a + val_days * per_day;
  if (b >= s.steps) throw DataError("target series too short for the prompt/selection/test split");
  return {s.slice_steps(0, a), s.slice_steps(a, b), s.slice_steps(b, s.steps)};
}

std::vector<int> window_starts(int steps, int window, int stride) {
  if (window <= 0 || stride <= 0) throw std::invalid_argument("window and stride must be positive");
  std::vector<int> out;
  for (int s = 0; s + window <= steps; s += stride) out.push_back(s);
  return out;
}

Domain make_domain(const Graph& graph, const SignalTensor& raw, const NormStats& stats) {
  graph.validate();
  raw.validate();
  if (graph.num_nodes != raw.nodes) throw DataError("dimension mismatch");
  Domain d;
  d.graph = graph;
  d.context = GraphContext::build(graph);
  d.signal = zscore(raw, stats);
  d.stats = stats;
  return d;
}

Sample make_sample(const SignalTensor& signal, int start, int num_patches, int patch_len) {
  const SignalTensor w = signal.slice_steps(start, start + num_patches * patch_len);
  PatchSet p = patchify(w, patch_len);
  Sample s;
  s.patches = std::move(p.values);
  s.tod = std::move(p.tod);
  s.dow = std::move(p.dow);
  s.nodes = signal.nodes;
  s.num_patches = num_patches;
  return s;
}

// Checkpoints ----------------------------------------------------------------

namespace {

std::string join(const std::vector<double>& v) {
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    out += (i ? "," : "") + std::string(buf);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

bool is_prompt_bank(const std::string& name) {
  return is_domain_prompt(name) || is_task_prompt(name);
}

}  // namespace

std::optional<NormStats> Checkpoint::norm_stats() const {
  auto m = meta.find("norm.mean");
  auto s = meta.find("norm.std");
  if (m == meta.end() || s == meta.end()) return std::nullopt;
  return NormStats{split_doubles(m->second), split_doubles(s->second)};
}

void Checkpoint::set_norm_stats(const NormStats& stats) {
  meta["norm.mean"] = join(stats.mean);
  meta["norm.std"] = join(stats.stddev);
}

std::vector<int> Checkpoint::unobserved() const {
  std::vector<int> out;
  auto it = meta.find("unobserved");
  if (it == meta.end()) return out;
  for (double v : split_doubles(it->second)) out.push_back(static_cast<int>(v));
  return out;
}

void Checkpoint::set_unobserved(const std::vector<int>& nodes) {
  meta["unobserved"] = join(std::vector<double>(nodes.begin(), nodes.end()));
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream man(dir / "manifest.txt");
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  std::ofstream cfg(dir / "config.txt");
  if (!man || !bin || !cfg) throw std::runtime_error("cannot write checkpoint under " + dir.string());
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config.hash()));
  man << "stgp-checkpoint 1\n";
  man << "stage " << stage << "\n";
  man << "config_hash " << hash << "\n";
  for (const auto& [k, v] : meta) man << "meta " << k << " " << v << "\n";
  std::size_t offset = 0;
  for (const auto& [name, p] : model.params().items()) {
    man << "param " << name << " " << p.value.rows() << " " << p.value.cols() << " " << offset
        << "\n";
    bin.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    offset += static_cast<std::size_t>(p.value.size());
  }
  cfg << config.to_text();
  if (!man || !bin || !cfg) throw std::runtime_error("checkpoint write failed");
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt")) {
    throw std::runtime_error("missing checkpoint: " + dir.string());
  }
  Checkpoint c;
  c.config = TrainConfig::from_file(dir / "config.txt");
  c.model = Model(c.config.model, 0);
  std::ifstream man(dir / "manifest.txt");
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("missing checkpoint payload: " + dir.string());
  std::vector<char> payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const std::size_t total = payload.size() / sizeof(double);

  std::string line, expected_hash;
  std::set<std::string> seen;
  std::getline(man, line);
  if (line != "stgp-checkpoint 1") throw std::runtime_error("bad checkpoint manifest header");
  while (std::getline(man, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "stage") {
      ls >> c.stage;
    } else if (kind == "config_hash") {
      ls >> expected_hash;
    } else if (kind == "meta") {
      std::string k, v;
      ls >> k;
      std::getline(ls >> std::ws, v);
      c.meta[k] = v;
    } else if (kind == "param") {
      std::string name;
      long rows = 0, cols = 0;
      std::size_t offset = 0;
      ls >> name >> rows >> cols >> offset;
      if (!ls || offset + static_cast<std::size_t>(rows * cols) > total) {
        throw std::runtime_error("corrupt checkpoint entry: " + name);
      }
      ParamStore& store = c.model.params();
      if (store.contains(name)) {
        const Mat& v = store.at(name).value;
        if (v.rows() != rows || v.cols() != cols) {
          throw std::runtime_error("checkpoint shape mismatch for " + name);
        }
      } else if (is_prompt_bank(name)) {
        if (rows != c.config.model.num_prompts || cols != c.config.model.d_h) {
          throw std::runtime_error("checkpoint shape mismatch for " + name);
        }
        store.add(name, Mat(rows, cols));
      } else {
        throw std::runtime_error("unexpected checkpoint parameter " + name);
      }
      Mat& dst = store.at(name).value;
      std::memcpy(dst.data(), payload.data() + offset * sizeof(double),
                  static_cast<std::size_t>(rows * cols) * sizeof(double));
      seen.insert(name);
    } else if (!kind.empty()) {
      throw std::runtime_error("unknown manifest line: " + line);
    }
  }
  for (const auto& [name, _] : c.model.params().items())
    if (!seen.count(name)) throw std::runtime_error("checkpoint lacks parameter " + name);
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(c.config.hash()));
  if (expected_hash != hash) throw std::runtime_error("checkpoint config hash mismatch");
  return c;
}

// Stages ---------------------------------------------------------------------

namespace {

struct WindowRef {
  int domain = 0;
  int start = 0;
};

struct StagePlan {
  std::string name;
  std::vector<Domain> train;
  std::vector<Domain> val;
  std::function<MaskSpec(std::mt19937_64&, int domain)> mask;
  ForwardOptions opt;
  std::optional<ForwardOptions> initial_opt;
  double lr = 1e-3;
  int epochs = 1;
  bool track_target = false;
};

std::vector<WindowRef> enumerate(const std::vector<Domain>& ds, int window, int stride) {
  std::vector<WindowRef> out;
  for (std::size_t d = 0; d < ds.size(); ++d)
    for (int s : window_starts(ds[d].signal.steps, window, stride))
      out.push_back({static_cast<int>(d), s});
  return out;
}

double global_grad_norm(const ParamStore& store) {
  double ss = 0.0;
  for (const auto& [_, p] : store.items())
    if (p.trainable && p.grad.size() != 0) ss += p.grad.squaredNorm();
  return std::sqrt(ss);
}

void check_finite(double v, const std::string& stage, int epoch) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("divergence in " + stage + ": non-finite loss at epoch " +
                             std::to_string(epoch));
  }
}

StageLog run_stage(Model& model, StagePlan& plan, const TrainConfig& cfg) {
  StageLog log;
  log.stage = plan.name;
  log.trainable_params = model.params().trainable_count();
  const int T_p = cfg.num_patches;
  const int L = cfg.model.patch_len;
  const int window = cfg.window_steps();
  const std::uint64_t seed = stage_seed(cfg.seed, plan.name);

  std::vector<WindowRef> train = enumerate(plan.train, window, cfg.stride());
  std::vector<WindowRef> val = enumerate(plan.val, window, cfg.stride());
  if (train.empty()) throw DataError(plan.name + ": training split shorter than one window");
  if (val.empty()) throw DataError(plan.name + ": validation split shorter than one window");
  if (cfg.val_windows > 0 && static_cast<int>(val.size()) > cfg.val_windows) {
    std::vector<WindowRef> pick;
    for (int k = 0; k < cfg.val_windows; ++k)
      pick.push_back(val[static_cast<std::size_t>(k) * val.size() / cfg.val_windows]);
    val = std::move(pick);
  }

  auto build = [&](const std::vector<Domain>& ds, const std::vector<WindowRef>& ws) {
    std::vector<Sample> out;
    out.reserve(ws.size());
    for (const WindowRef& w : ws) out.push_back(make_sample(ds[w.domain].signal, w.start, T_p, L));
    return out;
  };
  const std::vector<Sample> train_samples = build(plan.train, train);
  const std::vector<Sample> val_samples = build(plan.val, val);

  std::vector<MaskSpec> val_masks;
  {
    std::mt19937_64 vr = seeded(seed, fnv1a64("validation"));
    for (const WindowRef& w : val) val_masks.push_back(plan.mask(vr, w.domain));
  }
  if (plan.track_target) {
    auto touch = [&](const std::vector<Domain>& ds, const std::vector<WindowRef>& ws) {
      for (const WindowRef& w : ws) {
        const SignalTensor& s = ds[w.domain].signal;
        for (int k = 0; k < window; ++k) log.touched_epochs.insert(s.start_epoch + (w.start + k) * s.interval);
      }
    };
    touch(plan.train, train);
    touch(plan.val, val);
  }

  auto validate = [&](const ForwardOptions& opt) {
    double sum = 0.0;
    for (std::size_t k = 0; k < val.size(); ++k) {
      ad::Tape tape;
      const Sample& s = val_samples[k];
      ForwardResult r = model.forward(tape, s, plan.val[val[k].domain].context, val_masks[k], opt,
                                      &s.patches);
      sum += tape.value(r.loss)(0, 0);
    }
    return sum / static_cast<double>(val.size());
  };

  if (plan.initial_opt) log.initial_val = validate(*plan.initial_opt);

  // per-domain shuffled queues, interleaved round-robin
  const int n_domains = static_cast<int>(plan.train.size());
  std::vector<std::vector<int>> by_domain(n_domains);
  for (std::size_t k = 0; k < train.size(); ++k) by_domain[train[k].domain].push_back(static_cast<int>(k));

  AdamW opt(plan.lr, cfg.weight_decay);
  std::mt19937_64 mask_rng = seeded(seed, fnv1a64("masks"));
  std::map<std::string, Mat> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& [name, p] : model.params().items())
      if (p.trainable) best[name] = p.value;
  };
  snapshot();
  log.best_val = validate(plan.opt);  // the untrained state is a candidate too
  int since_best = 0;

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    if (cfg.cosine_lr) {
      opt.set_lr(plan.lr * 0.5 * (1.0 + std::cos(M_PI * epoch / plan.epochs)));
    }
    std::mt19937_64 er = seeded(seed, fnv1a64("epoch"), static_cast<std::uint64_t>(epoch));
    std::vector<std::vector<int>> queues = by_domain;
    for (auto& q : queues) std::shuffle(q.begin(), q.end(), er);
    std::vector<int> order;
    for (std::size_t pos = 0;; ++pos) {
      bool any = false;
      for (auto& q : queues)
        if (pos < q.size()) {
          order.push_back(q[pos]);
          any = true;
        }
      if (!any) break;
    }
    int n_batches = static_cast<int>((order.size() + cfg.batch_size - 1) / cfg.batch_size);
    if (cfg.batches_per_epoch > 0) n_batches = std::min(n_batches, cfg.batches_per_epoch);

    double epoch_loss = 0.0;
    int epoch_count = 0;
    for (int bi = 0; bi < n_batches; ++bi) {
      model.params().zero_grad();
      const int lo = bi * cfg.batch_size;
      const int hi = std::min<int>(lo + cfg.batch_size, static_cast<int>(order.size()));
      for (int k = lo; k < hi; ++k) {
        const int w = order[k];
        const Sample& s = train_samples[w];
        const MaskSpec mask = plan.mask(mask_rng, train[w].domain);
        ad::Tape tape;
        ForwardResult r = model.forward(tape, s, plan.train[train[w].domain].context, mask,
                                        plan.opt, &s.patches);
        const double l = tape.value(r.loss)(0, 0);
        check_finite(l, plan.name, epoch);
        epoch_loss += l;
        ++epoch_count;
        tape.backward(r.loss);
      }
      double scale = 1.0 / static_cast<double>(hi - lo);
      if (cfg.grad_clip > 0.0) {
        const double norm = global_grad_norm(model.params()) * scale;
        if (norm > cfg.grad_clip) scale *= cfg.grad_clip / norm;
      }
      opt.step(model.params(), scale);
      ++log.optimizer_steps;
    }
    log.train_loss.push_back(epoch_loss / std::max(1, epoch_count));
    const double v = validate(plan.opt);
    check_finite(v, plan.name, epoch);
    log.val_loss.push_back(v);
    if (v < log.best_val) {
      log.best_val = v;
      log.best_epoch = epoch;
      snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  for (auto& [name, value] : best) model.params().at(name).value = value;
  model.params().zero_grad();
  return log;
}

struct TargetView {
  Graph graph;
  SignalTensor signal;
  std::vector<int> hidden;    // indices within the view
  std::vector<int> observed;  // original indices of the view's observed nodes
};

TargetView make_view(const Graph& graph, const SignalTensor& signal, const std::vector<int>& unobserved,
                     bool inductive) {
  graph.validate();
  signal.validate();
  if (graph.num_nodes != signal.nodes) throw DataError("dimension mismatch");
  TargetView v;
  const auto u = sorted(unobserved);
  v.observed = complement(graph.num_nodes, u);
  if (inductive) {
    v.graph = graph.subgraph(v.observed);
    v.signal = signal.select_nodes(v.observed);
  } else {
    v.graph = graph;
    v.signal = signal;
    v.hidden = u;
  }
  return v;
}

}  // namespace

StageResult pretrain(const std::vector<std::pair<Graph, SignalTensor>>& sources,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (sources.empty()) throw std::invalid_argument("pretrain needs at least one source dataset");
  StagePlan plan;
  plan.name = "pretrain";
  for (const auto& [g, s] : sources) {
    SourceSplit sp = split_source(s, cfg.source_train_fraction);
    const NormStats st = cfg.normalize ? compute_stats(sp.train) : identity_stats(s.channels);
    plan.train.push_back(make_domain(g, sp.train, st));
    plan.val.push_back(make_domain(g, sp.val, st));
  }
  TaskTemplate tpl = make_template(TaskKind::Pretrain, cfg, {});
  plan.mask = [&](std::mt19937_64& rng, int d) {
    return task_mask(tpl, plan.train[d].graph.num_nodes, cfg.num_patches, &rng);
  };
  plan.lr = cfg.lr_pretrain;
  plan.epochs = cfg.epochs_pretrain;

  StageResult r;
  r.checkpoint.stage = "pretrained";
  r.checkpoint.config = cfg;
  r.checkpoint.model = Model(cfg.model, cfg.seed);
  r.checkpoint.model.params().set_trainable([](const std::string& n) { return is_backbone(n) || is_head(n); });
  r.log = run_stage(r.checkpoint.model, plan, cfg);
  r.checkpoint.meta["sources"] = std::to_string(sources.size());
  return r;
}

StageResult fit_domain_prompts(const Graph& graph, const SignalTensor& target,
                               const Checkpoint& pretrained, const TrainConfig& cfg,
                               const DomainStageOptions& opt) {
  cfg.validate();
  TargetView v = make_view(graph, target, opt.hidden_nodes, cfg.inductive);
  TargetSplit sp = split_target(v.signal, cfg.target_prompt_days, cfg.target_val_days);
  NormStats st = identity_stats(target.channels);
  if (cfg.normalize) {
    st = compute_stats(v.hidden.empty() ? sp.prompt
                                        : sp.prompt.select_nodes(complement(v.graph.num_nodes, v.hidden)));
  }

  StageResult r;
  r.checkpoint = pretrained;
  r.checkpoint.stage = "domain_prompted";
  r.checkpoint.config = cfg;
  Model& m = r.checkpoint.model;
  m.add_domain_prompts(stage_seed(cfg.seed, "domain.init"), opt.shared_bank);
  m.params().set_trainable(is_domain_prompt);

  StagePlan plan;
  plan.name = "domain";
  plan.train.push_back(make_domain(v.graph, sp.prompt, st));
  plan.val.push_back(make_domain(v.graph, sp.val, st));
  const int n = v.graph.num_nodes;
  plan.mask = [&](std::mt19937_64& rng, int) {
    return random_mask_with_hidden(n, cfg.num_patches, cfg.mask_ratio, v.hidden, rng);
  };
  plan.opt = m.default_options();
  plan.initial_opt = ForwardOptions{};
  plan.lr = cfg.lr_domain;
  plan.epochs = cfg.epochs_domain;
  plan.track_target = true;
  r.log = run_stage(m, plan, cfg);

  r.checkpoint.set_norm_stats(st);
  r.checkpoint.set_unobserved(sorted(opt.hidden_nodes));
  r.checkpoint.meta["inductive"] = cfg.inductive ? "1" : "0";
  r.checkpoint.meta["nodes"] = std::to_string(graph.num_nodes);
  return r;
}

StageResult fit_task_prompts(const Graph& graph, const SignalTensor& target,
                             const Checkpoint& domain_prompted, const TaskTemplate& tpl,
                             const TrainConfig& cfg, const TaskStageOptions& opt) {
  cfg.validate();
  if (tpl.kind == TaskKind::Pretrain) throw std::invalid_argument("task prompts need a downstream task");
  tpl.validate(graph.num_nodes, cfg.num_patches);
  const std::string task = task_name(tpl.kind);
  auto stats = domain_prompted.norm_stats();
  if (!stats) {
    if (!opt.finetune_all) throw std::invalid_argument("task stage needs a domain-prompted checkpoint");
    TargetSplit s0 = split_target(target, cfg.target_prompt_days, cfg.target_val_days);
    stats = cfg.normalize ? compute_stats(s0.prompt.select_nodes(
                                complement(graph.num_nodes, sorted(tpl.unobserved_nodes))))
                          : identity_stats(target.channels);
  }

  const bool spatial = spatial_task(tpl.kind);
  TargetView v = make_view(graph, target, spatial ? tpl.unobserved_nodes : std::vector<int>{},
                           spatial && tpl.inductive);
  TargetSplit sp = split_target(v.signal, cfg.target_prompt_days, cfg.target_val_days);

  StageResult r;
  r.checkpoint = domain_prompted;
  r.checkpoint.stage = "task_prompted:" + task;
  r.checkpoint.config = cfg;
  Model& m = r.checkpoint.model;
  if (opt.finetune_all) {
    m.params().set_trainable([](const std::string&) { return true; });
  } else {
    m.add_task_prompts(task, stage_seed(cfg.seed, "task.init." + task), opt.shared_bank);
    const bool head = cfg.tune_head;
    m.params().set_trainable([&](const std::string& n) {
      return is_task_prompt_for(n, task) || (head && is_head(n));
    });
  }

  StagePlan plan;
  plan.name = "task." + task;
  plan.train.push_back(make_domain(v.graph, sp.prompt, *stats));
  plan.val.push_back(make_domain(v.graph, sp.val, *stats));
  const int n = v.graph.num_nodes;
  plan.mask = [&, n](std::mt19937_64& rng, int) {
    return training_mask(tpl, n, cfg.num_patches, v.hidden, cfg.unobserved_fraction, rng);
  };
  plan.opt = m.default_options(task);
  plan.initial_opt = domain_prompted.model.default_options();
  plan.lr = opt.finetune_all ? cfg.lr_pretrain : cfg.lr_task;
  plan.epochs = cfg.epochs_task;
  plan.track_target = true;
  r.log = run_stage(m, plan, cfg);

  r.checkpoint.set_norm_stats(*stats);
  if (spatial) r.checkpoint.set_unobserved(sorted(tpl.unobserved_nodes));
  r.checkpoint.meta["task"] = task;
  r.checkpoint.meta["tune_head"] = cfg.tune_head ? "1" : "0";
  if (opt.finetune_all) r.checkpoint.meta["finetune_all"] = "1";
  if (!r.checkpoint.meta.count("nodes")) r.checkpoint.meta["nodes"] = std::to_string(graph.num_nodes);
  return r;
}

Prediction predict(Checkpoint& ckpt, const Graph& graph, const SignalTensor& window,
                   const TaskTemplate& tpl, const std::optional<NormStats>& stats) {
  const TrainConfig& cfg = ckpt.config;
  const int T_p = cfg.num_patches;
  const int L = cfg.model.patch_len;
  if (window.steps != T_p * L) throw std::invalid_argument("window length mismatch");
  if (window.nodes != graph.num_nodes) throw DataError("dimension mismatch");
  if (!tpl.inductive) {
    auto it = ckpt.meta.find("nodes");
    if (it != ckpt.meta.end() && std::stoi(it->second) != graph.num_nodes) {
      throw std::invalid_argument("unknown node in transductive mode");
    }
  }
  std::optional<NormStats> st = stats ? stats : ckpt.norm_stats();
  if (!st) throw std::invalid_argument("predict: no normalization statistics");

  const MaskSpec mask = task_mask(tpl, graph.num_nodes, T_p);
  const Sample s = make_sample(zscore(window, *st), 0, T_p, L);
  const GraphContext ctx = GraphContext::build(graph);
  ad::Tape tape;
  ForwardResult r = ckpt.model.forward(tape, s, ctx, mask, ckpt.model.default_options(task_name(tpl.kind)));
  const Mat& pred = tape.value(r.pred);

  Prediction out;
  std::set<int> ns, ts;
  const auto cells = mask.effective_eval_cells();
  for (const Cell& c : cells) {
    ns.insert(c.node);
    ts.insert(c.step);
  }
  out.nodes.assign(ns.begin(), ns.end());
  out.patches.assign(ts.begin(), ts.end());
  if (cells.size() != out.nodes.size() * out.patches.size()) {
    throw std::invalid_argument("predict: eval cells do not form a grid");
  }
  SignalTensor& v = out.values;
  v.nodes = static_cast<int>(out.nodes.size());
  v.steps = static_cast<int>(out.patches.size()) * L;
  v.channels = window.channels;
  v.channel_names = window.channel_names;
  v.interval = window.interval;
  v.start_epoch = window.start_epoch + static_cast<std::int64_t>(out.patches.front()) * L * window.interval;
  v.values.assign(static_cast<std::size_t>(v.nodes) * v.steps * v.channels, 0.0);
  for (int a = 0; a < v.nodes; ++a)
    for (int b = 0; b < static_cast<int>(out.patches.size()); ++b)
      for (int c = 0; c < v.channels; ++c)
        for (int k = 0; k < L; ++k)
          v.at(a, b * L + k, c) = pred(out.nodes[a] * T_p + out.patches[b], c * L + k);
  v = unzscore(v, *st);
  out.embedding = tape.value(r.encoded);
  return out;
}

}  // namespace stgp
