#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatgrad/experiment.hpp"

// Line charts for run metrics, written as plain SVG with no external assets.
// All inputs are parsed before the first output byte so a malformed run
// directory never leaves partial plot files behind.

namespace flatgrad {

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw std::runtime_error("metrics.csv: missing column " + name);
  }
};

inline MetricsTable load_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  MetricsTable table;
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw std::runtime_error("metrics.csv: missing header in " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.columns.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell == "nan") {
        row.push_back(std::nan(""));
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error("metrics.csv: bad cell '" + cell + "' in " +
                                 path.string());
      }
      if (used != cell.size())
        throw std::runtime_error("metrics.csv: bad cell '" + cell + "' in " +
                                 path.string());
      row.push_back(v);
    }
    if (row.size() != table.columns.size())
      throw std::runtime_error("metrics.csv: ragged row in " + path.string());
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty())
    throw std::runtime_error("metrics.csv: no data rows in " + path.string());
  return table;
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN breaks the line
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

}  // namespace detail

// A single chart: axes with ticks, one polyline per series, legend at the
// top right. Returns the complete SVG document.
inline std::string render_line_chart(const std::string& title, const std::string& x_label,
                                     const std::string& y_label,
                                     const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("render_line_chart: no series");

  const double width = 720, height = 440;
  const double left = 70, right = width - 20, top = 50, bottom = height - 50;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("render_line_chart: x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isnan(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!(xmin <= xmax))
    throw std::runtime_error("render_line_chart: no finite points to plot");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const auto sx = [&](double v) {
    return left + (v - xmin) / (xmax - xmin) * (right - left);
  };
  const auto sy = [&](double v) {
    return bottom - (v - ymin) / (ymax - ymin) * (bottom - top);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";

  svg << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
      << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << bottom << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double fy = ymin + (ymax - ymin) * i / 5.0;
    svg << "<line x1=\"" << sx(fx) << "\" y1=\"" << bottom << "\" x2=\"" << sx(fx)
        << "\" y2=\"" << bottom + 5 << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << sx(fx) << "\" y=\"" << bottom + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << detail::svg_num(fx) << "</text>\n"
        << "<line x1=\"" << left - 5 << "\" y1=\"" << sy(fy) << "\" x2=\"" << left
        << "\" y2=\"" << sy(fy) << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << left - 8 << "\" y=\"" << sy(fy) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << detail::svg_num(fy) << "</text>\n";
  }

  svg << "<text x=\"" << (left + right) / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << x_label << "</text>\n"
      << "<text x=\"18\" y=\"" << (top + bottom) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 "
      << (top + bottom) / 2 << ")\">" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    std::string points;
    const auto flush = [&]() {
      if (points.empty()) return;
      svg << "<polyline fill=\"none\" stroke=\"" << detail::series_color(si)
          << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
      points.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isnan(s.y[i])) {
        flush();
        continue;
      }
      points += detail::svg_num(sx(s.x[i])) + "," + detail::svg_num(sy(s.y[i])) + " ";
    }
    flush();
  }

  const double lx = right - 180, ly = top + 6;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double y = ly + 18.0 * static_cast<double>(si);
    svg << "<line x1=\"" << lx << "\" y1=\"" << y << "\" x2=\"" << lx + 24 << "\" y2=\""
        << y << "\" stroke=\"" << detail::series_color(si) << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << lx + 30 << "\" y=\"" << y + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[si].name
        << "</text>\n";
  }

  svg << "</svg>\n";
  return svg.str();
}

// Reads metrics.csv from each run directory and writes three charts into
// out_dir: test accuracy, schedule scale, and distortion angle, each with one
// series per run. Everything is parsed and rendered before any file opens.
inline std::vector<std::filesystem::path> emit_plots(
    const std::vector<std::filesystem::path>& run_dirs,
    const std::filesystem::path& out_dir) {
  if (run_dirs.empty()) throw std::invalid_argument("emit_plots: no run directories");

  std::vector<MetricsTable> tables;
  std::vector<std::string> names;
  tables.reserve(run_dirs.size());
  for (const auto& dir : run_dirs) {
    tables.push_back(load_metrics_csv(dir / "metrics.csv"));
    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    names.push_back(name);
  }

  struct Chart {
    const char* column;
    const char* file;
    const char* title;
    const char* y_label;
  };
  const Chart charts[] = {
      {"test_acc", "test_acc.svg", "Test accuracy", "test accuracy"},
      {"schedule_scale", "schedule_scale.svg", "Compensation schedule s(t)", "s(t)"},
      {"mean_cos_theta", "cos_theta.svg", "Gradient distortion angle", "mean cos theta"},
  };

  std::vector<std::pair<std::filesystem::path, std::string>> rendered;
  for (const auto& chart : charts) {
    std::vector<Series> series;
    for (std::size_t t = 0; t < tables.size(); ++t) {
      const auto& table = tables[t];
      const std::size_t ei = table.column_index("epoch");
      const std::size_t ci = table.column_index(chart.column);
      Series s;
      s.name = names[t];
      for (const auto& row : table.rows) {
        s.x.push_back(row[ei]);
        s.y.push_back(row[ci]);
      }
      series.push_back(std::move(s));
    }
    rendered.emplace_back(out_dir / chart.file,
                          render_line_chart(chart.title, "epoch", chart.y_label, series));
  }

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [path, content] : rendered) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    written.push_back(path);
  }
  return written;
}

inline std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& run_dir) {
  return emit_plots(std::vector<std::filesystem::path>{run_dir}, run_dir);
}

}  // namespace flatgrad
