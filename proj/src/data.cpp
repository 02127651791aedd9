// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/data.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stgp {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

void sort_unique(std::vector<int>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

void Graph::validate() const {
  if (num_nodes < 1) throw DataError("graph must have at least one node");
  if (adjacency.rows() != num_nodes || adjacency.cols() != num_nodes) {
    throw DataError("dimension mismatch: adjacency is not num_nodes x num_nodes");
  }
  for (Eigen::Index i = 0; i < adjacency.size(); ++i) {
    const double a = adjacency.data()[i];
    if (!std::isfinite(a) || a < 0.0 || a > 1.0) throw DataError("adjacency out of range");
  }
  if (!node_ids.empty() && static_cast<int>(node_ids.size()) != num_nodes) {
    throw DataError("dimension mismatch: node_ids");
  }
}

Graph Graph::subgraph(const std::vector<int>& keep) const {
  Graph g;
  g.num_nodes = static_cast<int>(keep.size());
  g.adjacency.resize(g.num_nodes, g.num_nodes);
  for (int a = 0; a < g.num_nodes; ++a)
    for (int b = 0; b < g.num_nodes; ++b) g.adjacency(a, b) = adjacency(keep[a], keep[b]);
  for (int k : keep) {
    if (!node_ids.empty()) g.node_ids.push_back(node_ids[k]);
  }
  return g;
}

void SignalTensor::validate() const {
  if (nodes < 1 || steps < 1 || channels < 1) throw DataError("signal dimensions must be positive");
  if (values.size() != static_cast<std::size_t>(nodes) * steps * channels) {
    throw DataError("dimension mismatch: signal payload size");
  }
  if (interval <= 0) throw DataError("interval must be positive");
  for (double v : values)
    if (!std::isfinite(v)) throw DataError("non-finite signal value");
}

SignalTensor SignalTensor::slice_steps(int begin, int end) const {
  if (begin < 0 || end > steps || begin >= end) throw DataError("slice_steps: bad range");
  SignalTensor out;
  out.nodes = nodes;
  out.steps = end - begin;
  out.channels = channels;
  out.start_epoch = start_epoch + static_cast<std::int64_t>(begin) * interval;
  out.interval = interval;
  out.channel_names = channel_names;
  out.values.resize(static_cast<std::size_t>(nodes) * out.steps * channels);
  for (int i = 0; i < nodes; ++i) {
    const auto* src = &values[(static_cast<std::size_t>(i) * steps + begin) * channels];
    std::copy(src, src + static_cast<std::size_t>(out.steps) * channels,
              &out.values[static_cast<std::size_t>(i) * out.steps * channels]);
  }
  return out;
}

SignalTensor SignalTensor::select_nodes(const std::vector<int>& keep) const {
  SignalTensor out = *this;
  out.nodes = static_cast<int>(keep.size());
  out.values.resize(static_cast<std::size_t>(out.nodes) * steps * channels);
  const std::size_t row = static_cast<std::size_t>(steps) * channels;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    std::copy(values.begin() + keep[k] * row, values.begin() + (keep[k] + 1) * row,
              out.values.begin() + k * row);
  }
  return out;
}

NormStats compute_stats(const SignalTensor& signal) {
  NormStats s;
  s.mean.assign(signal.channels, 0.0);
  s.stddev.assign(signal.channels, 0.0);
  const double n = static_cast<double>(signal.nodes) * signal.steps;
  for (int c = 0; c < signal.channels; ++c) {
    double sum = 0.0;
    for (int i = 0; i < signal.nodes; ++i)
      for (int t = 0; t < signal.steps; ++t) sum += signal.at(i, t, c);
    const double mu = sum / n;
    double ss = 0.0;
    for (int i = 0; i < signal.nodes; ++i)
      for (int t = 0; t < signal.steps; ++t) {
        const double d = signal.at(i, t, c) - mu;
        ss += d * d;
      }
    const double sd = std::sqrt(ss / n);
    if (!(sd >= kStdFloor)) throw DataError("degenerate channel " + std::to_string(c));
    s.mean[c] = mu;
    s.stddev[c] = sd;
  }
  return s;
}

NormStats identity_stats(int channels) {
  return NormStats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

SignalTensor zscore(const SignalTensor& signal, const NormStats& stats) {
  if (static_cast<int>(stats.mean.size()) != signal.channels) throw DataError("zscore: channel count");
  SignalTensor out = signal;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    const int c = static_cast<int>(k % signal.channels);
    out.values[k] = (signal.values[k] - stats.mean[c]) / stats.stddev[c];
  }
  return out;
}

SignalTensor unzscore(const SignalTensor& signal, const NormStats& stats) {
  if (static_cast<int>(stats.mean.size()) != signal.channels) throw DataError("unzscore: channel count");
  SignalTensor out = signal;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    const int c = static_cast<int>(k % signal.channels);
    out.values[k] = signal.values[k] * stats.stddev[c] + stats.mean[c];
  }
  return out;
}

std::pair<Graph, SignalTensor> load_dataset(const std::filesystem::path& meta_path) {
  std::ifstream in(meta_path);
  if (!in) throw DataError("missing file: " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed meta file " + meta_path.string() + ": " + e.what());
  }
  const auto dir = meta_path.parent_path();
  Graph graph;
  SignalTensor signal;
  try {
    graph.num_nodes = meta.at("num_nodes").get<int>();
    signal.nodes = graph.num_nodes;
    signal.steps = meta.at("num_steps").get<int>();
    signal.channels = meta.at("num_channels").get<int>();
    signal.interval = meta.at("interval_seconds").get<std::int64_t>();
    signal.start_epoch = meta.at("start_epoch").get<std::int64_t>();
    graph.node_ids = meta.at("node_ids").get<std::vector<std::string>>();
    if (meta.contains("channel_names")) {
      signal.channel_names = meta["channel_names"].get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("meta file: ") + e.what());
  }

  const auto adj_path = dir / meta.at("adjacency_file").get<std::string>();
  std::ifstream adj(adj_path);
  if (!adj) throw DataError("missing file: " + adj_path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(adj, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("adjacency: bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (static_cast<int>(rows.size()) != graph.num_nodes) {
    throw DataError("dimension mismatch: adjacency has " + std::to_string(rows.size()) + " rows");
  }
  graph.adjacency.resize(graph.num_nodes, graph.num_nodes);
  for (int i = 0; i < graph.num_nodes; ++i) {
    if (static_cast<int>(rows[i].size()) != graph.num_nodes) {
      throw DataError("dimension mismatch: adjacency row " + std::to_string(i));
    }
    for (int j = 0; j < graph.num_nodes; ++j) graph.adjacency(i, j) = rows[i][j];
  }

  const auto val_path = dir / meta.at("values_file").get<std::string>();
  std::ifstream vin(val_path, std::ios::binary);
  if (!vin) throw DataError("missing file: " + val_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(vin)),
                                   std::istreambuf_iterator<char>());
  const std::size_t count = static_cast<std::size_t>(signal.nodes) * signal.steps * signal.channels;
  if (bytes.size() != 4 * count) {
    throw DataError("dimension mismatch: values payload has " + std::to_string(bytes.size() / 4) +
                    " floats, meta implies " + std::to_string(count));
  }
  signal.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * k]) |
                               (static_cast<std::uint32_t>(bytes[4 * k + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[4 * k + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[4 * k + 3]) << 24);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    signal.values[k] = f;
  }
  graph.validate();
  signal.validate();
  return {std::move(graph), std::move(signal)};
}

void save_dataset(const std::filesystem::path& dir, const Graph& graph, const SignalTensor& signal) {
  graph.validate();
  signal.validate();
  if (graph.num_nodes != signal.nodes) throw DataError("dimension mismatch: graph vs signal");
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["num_nodes"] = graph.num_nodes;
  meta["num_steps"] = signal.steps;
  meta["num_channels"] = signal.channels;
  meta["interval_seconds"] = signal.interval;
  meta["start_epoch"] = signal.start_epoch;
  meta["adjacency_file"] = "adjacency.csv";
  meta["values_file"] = "values.bin";
  std::vector<std::string> ids = graph.node_ids;
  if (ids.empty())
    for (int i = 0; i < graph.num_nodes; ++i) ids.push_back("n" + std::to_string(i));
  meta["node_ids"] = ids;
  if (!signal.channel_names.empty()) meta["channel_names"] = signal.channel_names;
  std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";

  std::ofstream adj(dir / "adjacency.csv");
  char buf[64];
  for (int i = 0; i < graph.num_nodes; ++i) {
    for (int j = 0; j < graph.num_nodes; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", graph.adjacency(i, j));
      adj << (j ? "," : "") << buf;
    }
    adj << "\n";
  }

  std::ofstream vout(dir / "values.bin", std::ios::binary);
  for (double v : signal.values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    const std::array<unsigned char, 4> le = {
        static_cast<unsigned char>(bits & 0xff), static_cast<unsigned char>((bits >> 8) & 0xff),
        static_cast<unsigned char>((bits >> 16) & 0xff),
        static_cast<unsigned char>((bits >> 24) & 0xff)};
    vout.write(reinterpret_cast<const char*>(le.data()), 4);
  }
}

std::pair<std::vector<int>, std::vector<int>> time_features(std::int64_t start_epoch,
                                                            std::int64_t interval, int steps,
                                                            int patch_len) {
  const int num_patches = steps / patch_len;
  std::vector<int> tod(num_patches), dow(num_patches);
  for (int t = 0; t < num_patches; ++t) {
    const std::int64_t ts = start_epoch + static_cast<std::int64_t>(t) * patch_len * interval;
    tod[t] = static_cast<int>(floor_mod(ts, 86400) / 3600);
    // 1970-01-01 was a Thursday (3 with Monday = 0).
    dow[t] = static_cast<int>(floor_mod(floor_div(ts, 86400) + 3, 7));
  }
  return {std::move(tod), std::move(dow)};
}

std::pair<std::vector<int>, std::vector<int>> time_features(const SignalTensor& signal,
                                                            int patch_len) {
  return time_features(signal.start_epoch, signal.interval, signal.steps, patch_len);
}

PatchSet patchify(const SignalTensor& signal, int patch_len) {
  if (patch_len <= 0) throw DataError("patch length must be positive");
  if (signal.steps % patch_len != 0) throw DataError("length not divisible by patch size");
  PatchSet p;
  p.nodes = signal.nodes;
  p.num_patches = signal.steps / patch_len;
  p.patch_len = patch_len;
  p.channels = signal.channels;
  p.start_epoch = signal.start_epoch;
  p.interval = signal.interval;
  const int width = patch_len * signal.channels;
  p.values.resize(static_cast<Eigen::Index>(p.nodes) * p.num_patches, width);
  for (int i = 0; i < p.nodes; ++i)
    for (int t = 0; t < p.num_patches; ++t)
      for (int c = 0; c < p.channels; ++c)
        for (int s = 0; s < patch_len; ++s)
          p.values(static_cast<Eigen::Index>(i) * p.num_patches + t, c * patch_len + s) =
              signal.at(i, t * patch_len + s, c);
  std::tie(p.tod, p.dow) = time_features(signal, patch_len);
  return p;
}

SignalTensor unpatchify(const PatchSet& patches) {
  if (patches.values.rows() != static_cast<Eigen::Index>(patches.nodes) * patches.num_patches ||
      patches.values.cols() != static_cast<Eigen::Index>(patches.patch_len) * patches.channels) {
    throw DataError("unpatchify: malformed patch set");
  }
  SignalTensor s;
  s.nodes = patches.nodes;
  s.steps = patches.num_patches * patches.patch_len;
  s.channels = patches.channels;
  s.start_epoch = patches.start_epoch;
  s.interval = patches.interval;
  s.values.resize(static_cast<std::size_t>(s.nodes) * s.steps * s.channels);
  for (int i = 0; i < s.nodes; ++i)
    for (int t = 0; t < patches.num_patches; ++t)
      for (int c = 0; c < s.channels; ++c)
        for (int k = 0; k < patches.patch_len; ++k)
          s.at(i, t * patches.patch_len + k, c) = patches.values(
              static_cast<Eigen::Index>(i) * patches.num_patches + t, c * patches.patch_len + k);
  return s;
}

bool MaskSpec::node_masked(int i) const {
  return std::binary_search(masked_nodes.begin(), masked_nodes.end(), i);
}

bool MaskSpec::step_masked(int t) const {
  return std::binary_search(masked_steps.begin(), masked_steps.end(), t);
}

std::vector<int> MaskSpec::unmasked_nodes() const {
  std::vector<int> out;
  for (int i = 0; i < nodes; ++i)
    if (!node_masked(i)) out.push_back(i);
  return out;
}

std::vector<int> MaskSpec::unmasked_steps() const {
  std::vector<int> out;
  for (int t = 0; t < patches; ++t)
    if (!step_masked(t)) out.push_back(t);
  return out;
}

std::vector<Cell> MaskSpec::masked_cells() const {
  std::vector<Cell> out;
  for (int i = 0; i < nodes; ++i)
    for (int t = 0; t < patches; ++t)
      if (is_masked(i, t)) out.push_back({i, t});
  return out;
}

std::vector<Cell> MaskSpec::effective_eval_cells() const {
  return eval_cells ? *eval_cells : masked_cells();
}

double MaskSpec::masked_fraction() const {
  const double nu = nodes - static_cast<double>(masked_nodes.size());
  const double tu = patches - static_cast<double>(masked_steps.size());
  return 1.0 - (nu * tu) / (static_cast<double>(nodes) * patches);
}

void MaskSpec::normalize_and_validate() {
  sort_unique(masked_nodes);
  sort_unique(masked_steps);
  for (int i : masked_nodes)
    if (i < 0 || i >= nodes) throw DataError("mask: node index out of range");
  for (int t : masked_steps)
    if (t < 0 || t >= patches) throw DataError("mask: step index out of range");
  if (nodes - static_cast<int>(masked_nodes.size()) < 1) throw DataError("mask leaves no unmasked node");
  if (patches - static_cast<int>(masked_steps.size()) < 1) throw DataError("mask leaves no unmasked step");
  if (eval_cells) {
    std::sort(eval_cells->begin(), eval_cells->end());
    eval_cells->erase(std::unique(eval_cells->begin(), eval_cells->end()), eval_cells->end());
    for (const Cell& c : *eval_cells) {
      if (c.node < 0 || c.node >= nodes || c.step < 0 || c.step >= patches || !is_masked(c.node, c.step)) {
        throw DataError("mask: eval cell outside the masked set");
      }
    }
  }
}

MaskSpec make_mask(int nodes, int patches, std::vector<int> masked_nodes,
                   std::vector<int> masked_steps, std::optional<std::vector<Cell>> eval_cells) {
  MaskSpec m;
  m.nodes = nodes;
  m.patches = patches;
  m.masked_nodes = std::move(masked_nodes);
  m.masked_steps = std::move(masked_steps);
  m.eval_cells = std::move(eval_cells);
  m.normalize_and_validate();
  return m;
}

double per_dimension_ratio(double total_ratio) { return 1.0 - std::sqrt(1.0 - total_ratio); }

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

MaskSpec sample_random_mask(int nodes, int patches, double total_ratio, std::mt19937_64& rng) {
  if (!(total_ratio >= 0.0 && total_ratio < 1.0)) throw DataError("mask ratio must lie in [0, 1)");
  const double r = per_dimension_ratio(total_ratio);
  const int ms = round_half_up(r * nodes);
  const int mt = round_half_up(r * patches);
  if (ms >= nodes || mt >= patches) throw DataError("mask ratio leaves no unmasked nodes or steps");
  std::vector<int> ni(nodes), ti(patches);
  std::iota(ni.begin(), ni.end(), 0);
  std::iota(ti.begin(), ti.end(), 0);
  std::shuffle(ni.begin(), ni.end(), rng);
  std::shuffle(ti.begin(), ti.end(), rng);
  ni.resize(ms);
  ti.resize(mt);
  return make_mask(nodes, patches, std::move(ni), std::move(ti));
}

std::vector<int> unmasked_rows(const MaskSpec& mask) {
  std::vector<int> rows;
  const auto un = mask.unmasked_nodes();
  const auto ut = mask.unmasked_steps();
  rows.reserve(un.size() * ut.size());
  for (int i : un)
    for (int t : ut) rows.push_back(i * mask.patches + t);
  return rows;
}

GatherResult gather_unmasked(const Mat& patches, const MaskSpec& mask) {
  if (patches.rows() != static_cast<Eigen::Index>(mask.nodes) * mask.patches) {
    throw DataError("gather_unmasked: row count does not match mask");
  }
  GatherResult g;
  g.node_map = mask.unmasked_nodes();
  g.step_map = mask.unmasked_steps();
  g.row_map = unmasked_rows(mask);
  g.block.resize(static_cast<Eigen::Index>(g.row_map.size()), patches.cols());
  for (std::size_t r = 0; r < g.row_map.size(); ++r) g.block.row(r) = patches.row(g.row_map[r]);
  return g;
}

void scatter_unmasked(const GatherResult& gathered, Mat& full) {
  if (gathered.block.cols() != full.cols()) throw DataError("scatter_unmasked: width mismatch");
  for (std::size_t r = 0; r < gathered.row_map.size(); ++r) {
    full.row(gathered.row_map[r]) = gathered.block.row(r);
  }
}

}  // namespace stgp
