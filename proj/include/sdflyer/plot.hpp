#pragma once

// Mean +/- 95% CI time-series plots rendered as standalone SVG.

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "errors.hpp"
#include "eval.hpp"
#include "stats.hpp"

namespace sdflyer {

enum class TraceMetric { Position, Orientation };

struct TimeSeriesBand {
  std::string label;  // "{controller} {task}"
  std::size_t seeds = 0;
  std::vector<double> mean;
  std::vector<double> half_width;  // 95% CI, Student t over seeds
};

struct PlotResult {
  std::string svg;
  std::vector<TimeSeriesBand> bands;
  std::vector<std::string> warnings;
};

inline std::vector<TimeSeriesBand> timeseries_bands(std::span<const EpisodeTrace> traces, TraceMetric metric) {
  std::map<std::pair<std::string, std::string>, std::vector<const EpisodeTrace*>> groups;
  for (const auto& t : traces) groups[{t.controller, to_string(t.task)}].push_back(&t);
  std::vector<TimeSeriesBand> bands;
  for (const auto& [key, group] : groups) {
    TimeSeriesBand b;
    b.label = key.first + " " + key.second;
    b.seeds = group.size();
    const std::size_t len = group.front()->steps.size();
    for (const auto* tr : group)
      require(tr->steps.size() == len, ErrorKind::Config, "plot: traces of one series differ in length");
    std::vector<double> column(group.size());
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t k = 0; k < group.size(); ++k)
        column[k] = metric == TraceMetric::Position ? group[k]->steps[t].pos_err : group[k]->steps[t].ang_err;
      b.mean.push_back(mean(column));
      b.half_width.push_back(ci95_half_width(column));
    }
    bands.push_back(std::move(b));
  }
  return bands;
}

inline PlotResult plot_timeseries(std::span<const EpisodeTrace> traces, TraceMetric metric) {
  require(!traces.empty(), ErrorKind::Config, "plot: no traces");
  PlotResult res;
  res.bands = timeseries_bands(traces, metric);
  for (const auto& b : res.bands)
    if (b.seeds < 2) res.warnings.push_back("plot: series '" + b.label + "' has a single seed; drawing the mean only");

  constexpr double W = 800, H = 480, left = 70, right = 180, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  std::size_t len = 0;
  double ymax = 0.0;
  for (const auto& b : res.bands) {
    len = std::max(len, b.mean.size());
    for (std::size_t t = 0; t < b.mean.size(); ++t) ymax = std::max(ymax, b.mean[t] + b.half_width[t]);
  }
  if (ymax <= 0.0) ymax = 1.0;
  ymax *= 1.05;
  const double xmax = static_cast<double>(std::max<std::size_t>(len, 2) - 1);
  auto X = [&](double t) { return left + pw * t / xmax; };
  auto Y = [&](double v) { return top + ph * (1.0 - std::max(0.0, v) / ymax); };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#7f7f7f", "#333333", "#2ca02c", "#d62728", "#9467bd"};

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top + ph) + "\" x2=\"" + fmt(left + pw) + "\" y2=\"" +
       fmt(top + ph) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(left) + "\" y2=\"" + fmt(top + ph) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = ymax * i / 4.0;
    s += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(Y(v) + 4) + "\" font-size=\"11\" text-anchor=\"end\">" +
         fmt(v) + "</text>\n";
    const double t = xmax * i / 4.0;
    s += "<text x=\"" + fmt(X(t)) + "\" y=\"" + fmt(top + ph + 16) + "\" font-size=\"11\" text-anchor=\"middle\">" +
         fmt(t + 1) + "</text>\n";
  }
  const std::string ylabel = metric == TraceMetric::Position ? "position error [m]" : "orientation error [deg]";
  s += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(H - 12) +
       "\" font-size=\"13\" text-anchor=\"middle\">step</text>\n";
  s += "<text x=\"16\" y=\"" + fmt(top + ph / 2) + "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt(top + ph / 2) + ")\">" + ylabel + "</text>\n";

  for (std::size_t k = 0; k < res.bands.size(); ++k) {
    const auto& b = res.bands[k];
    const char* color = palette[k % (sizeof palette / sizeof *palette)];
    if (b.seeds >= 2) {
      std::string pts;
      for (std::size_t t = 0; t < b.mean.size(); ++t)
        pts += fmt(X(static_cast<double>(t))) + "," + fmt(Y(b.mean[t] + b.half_width[t])) + " ";
      for (std::size_t t = b.mean.size(); t-- > 0;)
        pts += fmt(X(static_cast<double>(t))) + "," + fmt(Y(b.mean[t] - b.half_width[t])) + " ";
      s += "<polygon points=\"" + pts + "\" fill=\"" + color + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string line;
    for (std::size_t t = 0; t < b.mean.size(); ++t)
      line += fmt(X(static_cast<double>(t))) + "," + fmt(Y(b.mean[t])) + " ";
    s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    s += "<line x1=\"" + fmt(left + pw + 10) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(left + pw + 30) + "\" y2=\"" +
         fmt(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt(left + pw + 36) + "\" y=\"" + fmt(ly + 4) + "\" font-size=\"11\">" + b.label + " (n=" +
         std::to_string(b.seeds) + ")</text>\n";
  }
  s += "</svg>\n";
  res.svg = std::move(s);
  return res;
}

}  // namespace sdflyer
