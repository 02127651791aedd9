// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/report.hpp"

#include "stgp/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace stgp {

namespace {

std::string fmt(double v, const char* f = "%.10g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string format_report(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::map<std::string, std::string> read_report(const std::filesystem::path& path) {
  return read_key_value_file(path);
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "task,method,horizon,mae,rmse,count\n";
  for (const MetricRow& r : rows) {
    out += r.task + "," + r.method + "," + r.horizon + "," + fmt(r.m.mae) + "," + fmt(r.m.rmse) +
           "," + std::to_string(r.m.count) + "\n";
  }
  return out;
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  std::vector<MetricRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() < 5) throw std::runtime_error("malformed metrics row: " + line);
    MetricRow r{f[0], f[1], f[2], {std::stod(f[3]), std::stod(f[4]), 0}};
    if (f.size() > 5) r.m.count = std::stoul(f[5]);
    rows.push_back(r);
  }
  return rows;
}

std::string render_table(const std::vector<MetricRow>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %-12s %-8s %10s %10s\n", "task", "method", "horizon", "MAE",
                "RMSE");
  out += buf;
  for (const MetricRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %-12s %-8s %10.4f %10.4f\n", r.task.c_str(),
                  r.method.c_str(), r.horizon.c_str(), r.m.mae, r.m.rmse);
    out += buf;
  }
  return out;
}

std::string loss_curve_svg(const StageLog& log) {
  const double W = 640, H = 360, ml = 60, mr = 20, mt = 30, mb = 40;
  std::vector<double> all = log.train_loss;
  all.insert(all.end(), log.val_loss.begin(), log.val_loss.end());
  double lo = 0.0, hi = 1.0;
  if (!all.empty()) {
    lo = *std::min_element(all.begin(), all.end());
    hi = *std::max_element(all.begin(), all.end());
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const std::size_t n = std::max<std::size_t>({log.train_loss.size(), log.val_loss.size(), 2});
  auto x = [&](std::size_t k) { return ml + (W - ml - mr) * k / static_cast<double>(n - 1); };
  auto y = [&](double v) { return mt + (H - mt - mb) * (hi - v) / (hi - lo); };
  auto path = [&](const std::vector<double>& v, const char* color) {
    if (v.empty()) return std::string();
    std::string d;
    for (std::size_t k = 0; k < v.size(); ++k)
      d += (k ? " L" : "M") + fmt(x(k), "%.2f") + "," + fmt(y(v[k]), "%.2f");
    return "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
  };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(ml, "%.0f") + "\" y=\"20\" font-size=\"14\">" + log.stage + " loss</text>\n";
  s += "<line x1=\"" + fmt(ml, "%.0f") + "\" y1=\"" + fmt(H - mb, "%.0f") + "\" x2=\"" +
       fmt(W - mr, "%.0f") + "\" y2=\"" + fmt(H - mb, "%.0f") + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(ml, "%.0f") + "\" y1=\"" + fmt(mt, "%.0f") + "\" x2=\"" + fmt(ml, "%.0f") +
       "\" y2=\"" + fmt(H - mb, "%.0f") + "\" stroke=\"black\"/>\n";
  s += "<text x=\"5\" y=\"" + fmt(mt + 5, "%.0f") + "\" font-size=\"11\">" + fmt(hi, "%.4g") + "</text>\n";
  s += "<text x=\"5\" y=\"" + fmt(H - mb, "%.0f") + "\" font-size=\"11\">" + fmt(lo, "%.4g") + "</text>\n";
  s += "<text x=\"" + fmt(W / 2, "%.0f") + "\" y=\"" + fmt(H - 10, "%.0f") +
       "\" font-size=\"11\">epoch</text>\n";
  s += path(log.train_loss, "steelblue");
  s += path(log.val_loss, "darkorange");
  s += "<text x=\"" + fmt(W - 150, "%.0f") + "\" y=\"20\" font-size=\"11\" fill=\"steelblue\">train</text>\n";
  s += "<text x=\"" + fmt(W - 90, "%.0f") + "\" y=\"20\" font-size=\"11\" fill=\"darkorange\">validation</text>\n";
  s += "</svg>\n";
  return s;
}

std::string embedding_csv(const Mat& e) {
  std::string out = "token";
  for (Eigen::Index c = 0; c < e.cols(); ++c) out += ",f" + std::to_string(c);
  out += "\n";
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    out += std::to_string(r);
    for (Eigen::Index c = 0; c < e.cols(); ++c) out += "," + fmt(e(r, c), "%.9g");
    out += "\n";
  }
  return out;
}

void write_experiment(const std::filesystem::path& dir, const ExperimentResult& res) {
  std::filesystem::create_directories(dir);
  write_file(dir / "report.txt", format_report(res.kv));
  write_file(dir / "metrics.csv", metrics_csv(res.rows));
  write_file(dir / "table.txt", render_table(res.rows));
  for (const StageLog& l : res.logs) write_file(dir / ("loss_" + l.stage + ".svg"), loss_curve_svg(l));
  if (res.embedding.size() > 0) write_file(dir / "embeddings.csv", embedding_csv(res.embedding));
}

MergedReport merge_reports(const std::vector<std::filesystem::path>& dirs) {
  if (dirs.empty()) throw std::invalid_argument("merge: no report directories");
  MergedReport m;
  std::map<std::string, std::vector<double>> numeric;
  std::map<std::string, std::vector<double>> mae, rmse;
  std::vector<std::string> order;
  for (const auto& d : dirs) {
    const auto kv = read_report(d / "report.txt");
    for (const auto& [k, v] : kv) {
      if (k.rfind("metric.", 0) == 0) numeric[k].push_back(std::stod(v));
      else if (!m.kv.count(k)) m.kv[k] = v;
    }
    for (const MetricRow& r : read_metrics_csv(d / "metrics.csv")) {
      const std::string key = r.task + "," + r.method + "," + r.horizon;
      if (!mae.count(key)) order.push_back(key);
      mae[key].push_back(r.m.mae);
      rmse[key].push_back(r.m.rmse);
    }
  }
  for (const auto& [k, v] : numeric) m.kv[k] = fmt(median(v));
  m.kv["merged.runs"] = std::to_string(dirs.size());
  m.kv.erase("seed");
  for (const std::string& key : order) {
    std::stringstream ss(key);
    MetricRow r;
    std::getline(ss, r.task, ',');
    std::getline(ss, r.method, ',');
    std::getline(ss, r.horizon, ',');
    r.m = {median(mae[key]), median(rmse[key]), mae[key].size()};
    m.rows.push_back(r);
  }
  return m;
}

void write_merged(const std::filesystem::path& dir, const MergedReport& merged) {
  std::filesystem::create_directories(dir);
  write_file(dir / "report.txt", format_report(merged.kv));
  write_file(dir / "metrics.csv", metrics_csv(merged.rows));
  write_file(dir / "table.txt", render_table(merged.rows));
}

}  // namespace stgp
