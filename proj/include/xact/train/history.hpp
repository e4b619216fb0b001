#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xact/data/types.hpp"
#include "xact/error.hpp"

namespace xact {

/// One evaluation result: "mae" is in the target's own units, "accuracy" a fraction.
struct HistoryRow {
  long step = 0;
  int epoch = 0;
  std::string task;
  std::string metric;
  double value = 0.0;
  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

using History = std::vector<HistoryRow>;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string history_csv(const History& h) {
  std::string out = "step,epoch,task,metric,value\n";
  for (const auto& r : h)
    out += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + r.task + "," + r.metric + "," +
           format_double(r.value) + "\n";
  return out;
}

inline History parse_history_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "step,epoch,task,metric,value")
    throw data_error("history CSV: expected header 'step,epoch,task,metric,value'");
  History h;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw data_error("history CSV line " + std::to_string(lineno) + ": expected 5 fields");
    try {
      h.push_back({std::stol(f[0]), std::stoi(f[1]), f[2], f[3], std::stod(f[4])});
    } catch (const std::exception&) {
      throw data_error("history CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return h;
}

/// A target level for one (task, metric) series. "mae" must fall to the
/// value, "accuracy" must rise to it.
struct Threshold {
  std::string task;
  std::string metric;
  double value = 0.0;

  bool lower_is_better() const { return metric != "accuracy"; }
  bool reached(double v) const { return lower_is_better() ? v <= value : v >= value; }
};

/// First step at which the series reaches the threshold, linearly
/// interpolated between the two logged steps that bracket the crossing.
inline std::optional<double> first_crossing(const History& h, const Threshold& t) {
  std::vector<std::pair<long, double>> series;
  for (const auto& r : h)
    if (r.task == t.task && r.metric == t.metric) series.emplace_back(r.step, r.value);
  std::stable_sort(series.begin(), series.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!t.reached(series[i].second)) continue;
    if (i == 0) return static_cast<double>(series[0].first);
    const auto [s0, v0] = series[i - 1];
    const auto [s1, v1] = series[i];
    const double frac = v1 == v0 ? 1.0 : (t.value - v0) / (v1 - v0);
    return static_cast<double>(s0) + std::clamp(frac, 0.0, 1.0) * static_cast<double>(s1 - s0);
  }
  return std::nullopt;
}

/// Steps the baseline needs over steps the candidate needs to reach every
/// threshold (a run reaches a set of thresholds at the latest of its
/// individual crossings). 0 when the candidate never gets there.
inline double measure_speedup(const History& baseline, const History& candidate, const std::vector<Threshold>& thresholds) {
  if (thresholds.empty()) throw usage_error("measure_speedup: no thresholds");
  double base = 0.0, cand = 0.0;
  bool cand_crosses = true;
  for (const auto& t : thresholds) {
    auto b = first_crossing(baseline, t);
    if (!b) throw data_error("measure_speedup: baseline never reaches " + t.task + " " + t.metric + " " + format_double(t.value));
    base = std::max(base, *b);
    auto c = first_crossing(candidate, t);
    if (!c)
      cand_crosses = false;
    else
      cand = std::max(cand, *c);
  }
  if (!cand_crosses) return 0.0;
  if (cand == 0.0) return base == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return base / cand;
}

}  // namespace xact
