#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pcp/eval/benchmark.hpp"
#include "pcp/eval/csv.hpp"

namespace pcp::eval {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

namespace svg_detail {

inline constexpr double kW = 720, kH = 400, kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
inline const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                       "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else if (c == '"') o += "&quot;";
    else o += c;
  }
  return o;
}

inline std::string tick(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

inline std::string frame(const std::string& title, const std::string& xlabel, const std::string& ylabel, double x0, double x1,
                         double y0, double y1) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(kW) + "\" height=\"" + num(kH) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kW / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = kLeft + pw * i / 4.0, fy = kTop + ph * (1.0 - i / 4.0);
    if (!xlabel.empty())
      s += "<text x=\"" + num(fx) + "\" y=\"" + num(kTop + ph + 16) + "\" text-anchor=\"middle\">" + tick(x0 + (x1 - x0) * i / 4.0) + "</text>\n";
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(fy + 4) + "\" text-anchor=\"end\">" + tick(y0 + (y1 - y0) * i / 4.0) + "</text>\n";
  }
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kH - 10) + "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + num(kTop + ph / 2) +
       ")\">" + escape(ylabel) + "</text>\n";
  return s;
}

inline std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    const char* c = kPalette[i % std::size(kPalette)];
    s += "<rect x=\"" + num(kW - kRight + 12) + "\" y=\"" + num(y - 8) + "\" width=\"12\" height=\"8\" fill=\"" + c + "\"/>\n";
    s += "<text x=\"" + num(kW - kRight + 30) + "\" y=\"" + num(y) + "\">" + escape(names[i]) + "</text>\n";
  }
  return s;
}

inline void range_of(const std::vector<double>& v, double& lo, double& hi) {
  for (double x : v)
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
}

}  // namespace svg_detail

// One polyline per series, shared axes, legend on the right.
inline std::string line_plot_svg(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel) {
  using namespace svg_detail;
  std::size_t points = 0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DataError("plot: series '" + s.name + "' has mismatched x and y");
    points += s.x.size();
  }
  if (series.empty() || points == 0) throw DataError("plot: empty input, nothing to draw");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    range_of(s.x, x0, x1);
    range_of(s.y, y0, y1);
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  std::string s = frame(title, xlabel, ylabel, x0, x1, y0, y1);
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& se = series[k];
    names.push_back(se.name);
    s += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[k % std::size(kPalette)]) + "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < se.x.size(); ++i) {
      if (!std::isfinite(se.x[i]) || !std::isfinite(se.y[i])) continue;
      const double px = kLeft + pw * (se.x[i] - x0) / (x1 - x0);
      const double py = kTop + ph * (1.0 - (se.y[i] - y0) / (y1 - y0));
      s += (first ? "" : " ") + num(px) + "," + num(py);
      first = false;
    }
    s += "\"/>\n";
  }
  return s + legend(names) + "</svg>\n";
}

// Grouped bars: one group per category, one bar per series within it.
inline std::string bar_chart_svg(const std::vector<std::string>& categories, const std::vector<Series>& series,
                                 const std::string& title, const std::string& ylabel) {
  using namespace svg_detail;
  if (categories.empty() || series.empty()) throw DataError("plot: empty input, nothing to draw");
  double y1 = 0.0, y0 = 0.0;
  for (const auto& se : series) {
    if (se.y.size() != categories.size()) throw DataError("plot: bar series '" + se.name + "' does not cover every category");
    range_of(se.y, y0, y1);
  }
  if (!(y1 > y0)) y1 = y0 + 1.0;
  std::string s = frame(title, "", ylabel, 0.0, 1.0, y0, y1);
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const double gw = pw / static_cast<double>(categories.size());
  const double bw = 0.8 * gw / static_cast<double>(series.size());
  auto ypix = [&](double v) { return kTop + ph * (1.0 - (v - y0) / (y1 - y0)); };
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    names.push_back(series[k].name);
    for (std::size_t c = 0; c < categories.size(); ++c) {
      const double v = std::isfinite(series[k].y[c]) ? series[k].y[c] : 0.0;
      const double x = kLeft + gw * static_cast<double>(c) + 0.1 * gw + bw * static_cast<double>(k);
      const double top = ypix(std::max(v, 0.0)), bottom = ypix(std::min(v, 0.0));
      s += "<rect x=\"" + num(x) + "\" y=\"" + num(top) + "\" width=\"" + num(bw) + "\" height=\"" + num(bottom - top) +
           "\" fill=\"" + kPalette[k % std::size(kPalette)] + "\"/>\n";
    }
  }
  for (std::size_t c = 0; c < categories.size(); ++c)
    s += "<text x=\"" + num(kLeft + gw * (static_cast<double>(c) + 0.5)) + "\" y=\"" + num(kTop + ph + 16) +
         "\" text-anchor=\"middle\">" + escape(categories[c]) + "</text>\n";
  return s + legend(names) + "</svg>\n";
}

// Numeric table: first column is x, every other column a series.
inline std::vector<Series> series_from_table(const Table& t) {
  if (t.header.size() < 2) throw DataError("plot: need an x column and at least one series");
  std::vector<Series> out(t.header.size() - 1);
  for (std::size_t k = 1; k < t.header.size(); ++k) out[k - 1].name = t.header[k];
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double x = parse_number(t.rows[i][0], t.header[0] + " row " + std::to_string(i + 1));
    for (std::size_t k = 1; k < t.header.size(); ++k) {
      out[k - 1].x.push_back(x);
      out[k - 1].y.push_back(parse_number(t.rows[i][k], t.header[k] + " row " + std::to_string(i + 1)));
    }
  }
  return out;
}

inline void write_text(const std::string& text, const std::string& path) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw DataError("cannot write " + path);
  o << text;
  if (!o) throw DataError("write failed for " + path);
}

// Bar chart of MAE per scenario from a benchmark metrics file.
inline std::string benchmark_bars_svg(const std::vector<MetricsRow>& rows, const std::string& title) {
  std::vector<std::string> scen, meth;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    if (std::find(scen.begin(), scen.end(), r.scenario) == scen.end()) scen.push_back(r.scenario);
    if (std::find(meth.begin(), meth.end(), r.method) == meth.end()) meth.push_back(r.method);
  }
  std::vector<Series> series;
  for (const auto& m : meth) {
    Series s{m, {}, {}};
    for (const auto& c : scen) {
      double v = NAN;
      for (const auto& r : rows)
        if (r.method == m && r.scenario == c && r.status == "ok") v = r.mae;
      s.y.push_back(v);
    }
    series.push_back(s);
  }
  return bar_chart_svg(scen, series, title, "MAE (bpm)");
}

// Chooses the chart from the file's header: benchmark metrics become bars,
// any numeric table becomes line plots over its first column. Several
// waveform files overlay onto one chart.
inline std::string plot_files(const std::vector<std::string>& inputs, const std::string& title) {
  if (inputs.empty()) throw DataError("plot: no input files");
  if (inputs.size() == 1) {
    const Table t = read_csv(inputs[0]);
    if (t.rows.empty()) throw DataError("plot: " + inputs[0] + " has no rows");
    if (t.header == metrics_header()) return benchmark_bars_svg(read_metrics_rows(inputs[0]), title);
    auto series = series_from_table(t);
    return line_plot_svg(series, title, t.header[0], series.size() == 1 ? series[0].name : "value");
  }
  std::vector<Series> all;
  std::string xlabel;
  for (const auto& p : inputs) {
    const Table t = read_csv(p);
    if (t.rows.empty()) throw DataError("plot: " + p + " has no rows");
    xlabel = t.header[0];
    auto s = series_from_table(t);
    const std::string stem = std::filesystem::path(p).stem().string();
    for (auto& x : s) {
      x.name = s.size() == 1 ? stem : stem + ":" + x.name;
      all.push_back(std::move(x));
    }
  }
  return line_plot_svg(all, title, xlabel, "value");
}

}  // namespace pcp::eval
