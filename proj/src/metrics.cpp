#include "ovmse/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "ovmse/checkpoint.hpp"
#include "ovmse/errors.hpp"

namespace ovmse {

std::optional<double> MetricsRow::value(std::size_t column) const {
  switch (column) {
    case 0: return static_cast<double>(step);
    case 1: return episode_return_mean;
    case 2: return success_rate;
    case 3: return epsilon;
    case 4: return lambda_memory;
    case 5: return loss;
    case 6: return q_probe_mean;
    case 7: return mem_branch_fraction;
  }
  throw UsageError("metrics column index out of range");
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string encode_metrics(const std::vector<MetricsRow>& rows) {
  std::string out;
  const auto& cols = metrics_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    for (std::size_t c = 1; c < cols.size(); ++c) {
      out += ',';
      if (const auto v = r.value(c)) out += format_double(*v);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_cell(const std::string& cell, const std::string& where) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw ArtifactError(where + ": '" + cell + "' is not a number");
  }
  return v;
}

}  // namespace

std::vector<MetricsRow> decode_metrics(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ArtifactError(origin + ": empty metrics file");
  const auto header = split_csv(line);
  const auto& cols = metrics_columns();
  for (std::size_t c = 0; c < std::max(header.size(), cols.size()); ++c) {
    const std::string found = c < header.size() ? header[c] : "<missing>";
    const std::string expected = c < cols.size() ? cols[c] : "<none>";
    if (found != expected) {
      throw ConfigError(origin + ": metrics schema mismatch at column " + std::to_string(c + 1) +
                        ": expected '" + expected + "', found '" + found + "'");
    }
  }
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const std::string where = origin + ":" + std::to_string(lineno);
    if (cells.size() != cols.size()) throw ArtifactError(where + ": wrong number of cells");
    MetricsRow r;
    const auto step = parse_cell(cells[0], where);
    if (!step || *step < 0) throw ArtifactError(where + ": missing step");
    r.step = static_cast<std::uint64_t>(*step);
    r.episode_return_mean = parse_cell(cells[1], where);
    r.success_rate = parse_cell(cells[2], where);
    r.epsilon = parse_cell(cells[3], where);
    r.lambda_memory = parse_cell(cells[4], where);
    r.loss = parse_cell(cells[5], where);
    r.q_probe_mean = parse_cell(cells[6], where);
    r.mem_branch_fraction = parse_cell(cells[7], where);
    rows.push_back(r);
  }
  return rows;
}

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  write_file_bytes(path, encode_metrics(rows));
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ArtifactError("metrics file not found: " + path.string());
  return decode_metrics(read_file_bytes(path), path.string());
}

double normalized_auc(const std::vector<MetricsRow>& rows, std::size_t column) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) {
    if (const auto v = r.value(column)) pts.emplace_back(static_cast<double>(r.step), *v);
  }
  if (pts.size() < 2) return 0.0;
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
  }
  const double span = pts.back().first - pts.front().first;
  return span > 0.0 ? area / span : 0.0;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw UsageError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

// ------------------------------------------------------------------- plots

namespace {

struct SeriesStats {
  std::string label;
  std::vector<double> steps;
  std::vector<double> median;
  std::vector<double> lo;
  std::vector<double> hi;
  bool band = false;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string render_chart(const std::string& metric, const std::vector<SeriesStats>& series) {
  const double width = 640, height = 400, left = 70, right = 160, top = 40, bottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      x0 = std::min(x0, s.steps[i]);
      x1 = std::max(x1, s.steps[i]);
      y0 = std::min({y0, s.lo[i], s.median[i]});
      y1 = std::max({y1, s.hi[i], s.median[i]});
    }
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed(left) << "\" y=\"24\" font-size=\"14\">" << metric << "</text>\n";
  svg << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(pw)
      << "\" height=\"" << fixed(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0;
    const double xv = x0 + (x1 - x0) * k / 4.0;
    svg << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(py(yv) + 4)
        << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
    svg << "<text x=\"" << fixed(px(xv)) << "\" y=\"" << fixed(top + ph + 16)
        << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n";
  }
  svg << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(height - 10)
      << "\" text-anchor=\"middle\">step</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
    if (s.band) {
      svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        svg << fixed(px(s.steps[i])) << ',' << fixed(py(s.hi[i])) << ' ';
      }
      for (std::size_t i = s.steps.size(); i-- > 0;) {
        svg << fixed(px(s.steps[i])) << ',' << fixed(py(s.lo[i])) << ' ';
      }
      svg << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      svg << fixed(px(s.steps[i])) << ',' << fixed(py(s.median[i])) << ' ';
    }
    svg << "\"/>\n";
    const double ly = top + 14 + 16 * static_cast<double>(si);
    svg << "<line x1=\"" << fixed(left + pw + 10) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\""
        << fixed(left + pw + 28) << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fixed(left + pw + 32) << "\" y=\"" << fixed(ly) << "\">" << xml_escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(
    const std::vector<std::pair<std::string, std::vector<std::filesystem::path>>>& series,
    const std::filesystem::path& out_dir) {
  if (series.empty()) throw UsageError("plot: no input series");
  std::vector<std::vector<std::vector<MetricsRow>>> data;
  for (const auto& [label, files] : series) {
    if (files.empty()) throw UsageError("plot: series '" + label + "' has no files");
    auto& runs = data.emplace_back();
    for (const auto& f : files) runs.push_back(read_metrics(f));
  }
  std::vector<std::filesystem::path> written;
  const auto& cols = metrics_columns();
  for (std::size_t c = 1; c < cols.size(); ++c) {
    std::vector<SeriesStats> stats;
    for (std::size_t si = 0; si < series.size(); ++si) {
      std::map<std::uint64_t, std::vector<double>> by_step;
      for (const auto& run : data[si]) {
        for (const auto& r : run) {
          if (const auto v = r.value(c)) by_step[r.step].push_back(*v);
        }
      }
      if (by_step.empty()) continue;
      SeriesStats s;
      s.label = series[si].first;
      s.band = data[si].size() > 1;
      for (const auto& [step, vals] : by_step) {
        s.steps.push_back(static_cast<double>(step));
        s.median.push_back(quantile(vals, 0.5));
        s.lo.push_back(s.band ? quantile(vals, 0.25) : s.median.back());
        s.hi.push_back(s.band ? quantile(vals, 0.75) : s.median.back());
      }
      stats.push_back(std::move(s));
    }
    if (stats.empty()) continue;
    const auto path = out_dir / (cols[c] + ".svg");
    write_file_bytes(path, render_chart(cols[c], stats));
    written.push_back(path);
  }
  return written;
}

}  // namespace ovmse
