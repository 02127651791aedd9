// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Report files: key=value summary, CSV metrics, a text table, SVG loss
// curves and raw embedding dumps.

#pragma once

#include "stgp/evalbench.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace stgp {

std::string format_report(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_report(const std::filesystem::path& path);

std::string metrics_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);
std::string render_table(const std::vector<MetricRow>& rows);

/// Train and validation curves of one stage as a standalone SVG document.
std::string loss_curve_svg(const StageLog& log);
/// One row per token: index followed by the d_h features.
std::string embedding_csv(const Mat& embedding);

/// report.txt, metrics.csv, table.txt, loss_<stage>.svg, embeddings.csv.
void write_experiment(const std::filesystem::path& dir, const ExperimentResult& res);

struct MergedReport {
  std::map<std::string, std::string> kv;
  std::vector<MetricRow> rows;
};
/// Medians over runs of every metric; other keys come from the first run.
MergedReport merge_reports(const std::vector<std::filesystem::path>& dirs);
void write_merged(const std::filesystem::path& dir, const MergedReport& merged);

double median(std::vector<double> v);

}  // namespace stgp
