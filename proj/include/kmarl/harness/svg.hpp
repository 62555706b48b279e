#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "kmarl/harness/csv.hpp"

namespace kmarl::harness {

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 440;
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Tick step of the form {1,2,5} x 10^k giving roughly `target` intervals.
inline double tick_step(double span, int target) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

}  // namespace detail

/// Line chart of every non-x column against column 0. Empty cells break the
/// line. Output depends only on the table and options.
inline std::string render_line_chart(const CsvTable& table, const ChartOptions& opt) {
  static constexpr std::array<const char*, 8> palette = {
      "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  if (table.header.size() < 2) throw std::invalid_argument("chart: need an x column and a series");
  const std::vector<double> xs = table.numeric_column(0);
  std::vector<std::vector<double>> series;
  for (std::size_t c = 1; c < table.header.size(); ++c) series.push_back(table.numeric_column(c));

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (std::size_t r = 0; r < xs.size(); ++r) {
    for (const auto& s : series) {
      if (std::isnan(s[r]) || std::isnan(xs[r])) continue;
      x0 = std::min(x0, xs[r]);
      x1 = std::max(x1, xs[r]);
      y0 = std::min(y0, s[r]);
      y1 = std::max(y1, s[r]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) {
    const double pad = y0 == 0.0 ? 1.0 : std::abs(y0) * 0.05;
    y0 -= pad;
    y1 += pad;
  }
  const double ystep = detail::tick_step(y1 - y0, 6);
  y0 = std::floor(y0 / ystep) * ystep;
  y1 = std::ceil(y1 / ystep) * ystep;
  const double xstep = detail::tick_step(x1 - x0, 8);

  const double left = 90, right = 150, top = 40, bottom = 60;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  using detail::fmt;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) +
         "\" height=\"" + std::to_string(opt.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         detail::escape(opt.title) + "</text>\n";

  const long ny = std::lround((y1 - y0) / ystep);
  for (long k = 0; k <= ny; ++k) {
    const double y = y0 + static_cast<double>(k) * ystep;
    const std::string yy = fmt("%.2f", py(y));
    svg += "<line x1=\"" + fmt("%.2f", left) + "\" y1=\"" + yy + "\" x2=\"" + fmt("%.2f", left + pw) +
           "\" y2=\"" + yy + "\" stroke=\"#e0e0e0\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", left - 6) + "\" y=\"" + yy +
           "\" text-anchor=\"end\" dominant-baseline=\"middle\">" + fmt("%.4g", std::abs(y) < ystep * 1e-9 ? 0.0 : y) +
           "</text>\n";
  }
  const double xfirst = std::ceil(x0 / xstep) * xstep;
  for (long k = 0; xfirst + static_cast<double>(k) * xstep <= x1 + xstep * 1e-9; ++k) {
    const double x = xfirst + static_cast<double>(k) * xstep;
    const std::string xx = fmt("%.2f", px(x));
    svg += "<line x1=\"" + xx + "\" y1=\"" + fmt("%.2f", top + ph) + "\" x2=\"" + xx + "\" y2=\"" +
           fmt("%.2f", top + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + xx + "\" y=\"" + fmt("%.2f", top + ph + 18) + "\" text-anchor=\"middle\">" +
           fmt("%.6g", x) + "</text>\n";
  }
  svg += "<rect x=\"" + fmt("%.2f", left) + "\" y=\"" + fmt("%.2f", top) + "\" width=\"" + fmt("%.2f", pw) +
         "\" height=\"" + fmt("%.2f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"" + fmt("%.1f", opt.height - 15.0) +
         "\" text-anchor=\"middle\">" + detail::escape(opt.x_label.empty() ? table.header[0] : opt.x_label) +
         "</text>\n";
  svg += "<text transform=\"translate(18," + fmt("%.1f", top + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + detail::escape(opt.y_label) + "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = palette[s % palette.size()];
    std::string path;
    bool pen_down = false;
    for (std::size_t r = 0; r < xs.size(); ++r) {
      if (std::isnan(series[s][r]) || std::isnan(xs[r])) {
        pen_down = false;
        continue;
      }
      path += pen_down ? " L" : (path.empty() ? "M" : " M");
      path += fmt("%.2f", px(xs[r])) + "," + fmt("%.2f", py(series[s][r]));
      pen_down = true;
    }
    if (!path.empty()) {
      svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.5\"/>\n";
    }
    const double ly = top + 14 + 18 * static_cast<double>(s);
    svg += "<line x1=\"" + fmt("%.2f", left + pw + 12) + "\" y1=\"" + fmt("%.2f", ly) + "\" x2=\"" +
           fmt("%.2f", left + pw + 32) + "\" y2=\"" + fmt("%.2f", ly) + "\" stroke=\"" + colour +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", left + pw + 38) + "\" y=\"" + fmt("%.2f", ly) +
           "\" dominant-baseline=\"middle\">" + detail::escape(table.header[s + 1]) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

/// Title and axis labels the harness uses for its own tables, keyed on the x
/// column, so a chart can be re-rendered from the CSV alone.
inline ChartOptions chart_options_for(const CsvTable& table) {
  const std::string x = table.header.empty() ? "" : table.header[0];
  if (x == "episode") return {"Smoothed episode reward", "episode", "reward"};
  if (x == "count") return {"Mean system latency", "number of vehicles", "latency"};
  return {"", x, ""};
}

inline std::string render_line_chart(const CsvTable& table) {
  return render_line_chart(table, chart_options_for(table));
}

}  // namespace kmarl::harness
