#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ovmse {

// Fixed metrics schema; absent values are written as empty cells.
inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "step",          "episode_return_mean", "success_rate", "epsilon", "lambda_memory",
      "loss",          "q_probe_mean",        "mem_branch_fraction"};
  return cols;
}

struct MetricsRow {
  std::uint64_t step = 0;
  std::optional<double> episode_return_mean;
  std::optional<double> success_rate;
  std::optional<double> epsilon;
  std::optional<double> lambda_memory;
  std::optional<double> loss;
  std::optional<double> q_probe_mean;
  std::optional<double> mem_branch_fraction;

  std::optional<double> value(std::size_t column) const;
  bool operator==(const MetricsRow&) const = default;
};

// Shortest decimal that parses back to the same double.
std::string format_double(double value);

std::string encode_metrics(const std::vector<MetricsRow>& rows);
// Throws ConfigError naming the offending column if the header differs from
// the schema, ArtifactError for unreadable rows.
std::vector<MetricsRow> decode_metrics(const std::string& text, const std::string& origin);
void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

// Area under a metric over steps (trapezoid), divided by the step span.
// Rows lacking the metric are skipped. Returns 0 for fewer than two points.
double normalized_auc(const std::vector<MetricsRow>& rows, std::size_t column);

// Linear-interpolated quantile of an unsorted sample; q in [0, 1].
double quantile(std::vector<double> values, double q);

// One SVG line chart per metric column with data; each label is one series
// (median across its files, with an interquartile band when it has more than
// one file). Returns the written paths in column order.
std::vector<std::filesystem::path> emit_plots(
    const std::vector<std::pair<std::string, std::vector<std::filesystem::path>>>& series,
    const std::filesystem::path& out_dir);

}  // namespace ovmse
