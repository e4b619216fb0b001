#pragma once

#include <algorithm>
#include <exception>
#include <cmath>
#include <span>
#include <thread>
#include <vector>

#include "xact/data/types.hpp"
#include "xact/data/validate.hpp"

namespace xact {

inline constexpr double kDefaultSigma = 0.1;
// Each stick is evaluated within +/- 6 sigma of its centre.
inline constexpr double kSmearCutoffSigmas = 6.0;

/// Gaussian-broadens sticks onto XrdGrid and rescales so the maximum is 100.
inline XrdVector smear(const StickPattern& pattern, double sigma = kDefaultSigma) {
  if (!(sigma > 0.0)) throw usage_error("smear: sigma must be positive");
  if (pattern.peaks.empty()) throw data_error("smear: empty stick pattern");
  std::vector<double> acc(XrdGrid::points, 0.0);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  const double reach = kSmearCutoffSigmas * sigma;
  for (const auto& pk : pattern.peaks) {
    if (!std::isfinite(pk.two_theta) || !std::isfinite(pk.intensity) || pk.intensity < 0.0f)
      throw data_error("smear: invalid peak");
    if (pk.intensity == 0.0f) continue;
    const double centre = pk.two_theta;
    const int lo = std::max(0, static_cast<int>(std::ceil((centre - reach - XrdGrid::start) / XrdGrid::spacing)));
    const int hi = std::min(XrdGrid::points - 1,
                            static_cast<int>(std::floor((centre + reach - XrdGrid::start) / XrdGrid::spacing)));
    for (int g = lo; g <= hi; ++g) {
      const double d = XrdGrid::angle(g) - centre;
      acc[static_cast<std::size_t>(g)] += pk.intensity * std::exp(-d * d * inv_two_var);
    }
  }
  const double peak = *std::max_element(acc.begin(), acc.end());
  if (!(peak > 0.0)) throw data_error("smear: pattern has no intensity on the grid");
  const double scale = 100.0 / peak;
  XrdVector out;
  out.values.resize(XrdGrid::points);
  for (int g = 0; g < XrdGrid::points; ++g)
    out.values[static_cast<std::size_t>(g)] = static_cast<float>(std::min(100.0, acc[static_cast<std::size_t>(g)] * scale));
  return out;
}

/// 17 x 250 row-major view of a dense trace.
struct XrdTokens {
  std::vector<float> values;  // token i occupies [250 i, 250 (i + 1))

  float at(int token, int offset) const {
    return values[static_cast<std::size_t>(token * XrdGrid::token_width + offset)];
  }
  std::span<const float> token(int i) const {
    return std::span<const float>(values).subspan(static_cast<std::size_t>(i * XrdGrid::token_width),
                                                  XrdGrid::token_width);
  }
};

inline XrdTokens tokenize(const XrdVector& v) {
  if (v.values.size() != static_cast<std::size_t>(XrdGrid::points))
    throw data_error("tokenize: expected 4250 values, got " + std::to_string(v.values.size()));
  return XrdTokens{v.values};
}

inline XrdVector flatten(const XrdTokens& t) {
  if (t.values.size() != static_cast<std::size_t>(XrdGrid::points))
    throw data_error("flatten: expected 17 x 250 tokens");
  return XrdVector{t.values};
}

/// Replaces a record's stick pattern with its smeared trace. Dense records pass through.
inline MaterialRecord densify(MaterialRecord record, double sigma = kDefaultSigma) {
  if (const auto* s = std::get_if<StickPattern>(&record.xrd)) record.xrd = smear(*s, sigma);
  return record;
}

/// Densifies every record on `workers` threads; output is sorted by record id.
inline std::vector<MaterialRecord> prepare_records(std::vector<MaterialRecord> records,
                                                   double sigma = kDefaultSigma, unsigned workers = 1) {
  for (const auto& r : records)
    if (const auto* s = std::get_if<StickPattern>(&r.xrd)) {
      ValidationReport rep;
      validate_sticks(*s, rep);
      if (!rep.ok()) throw data_error("record " + std::to_string(r.id) + ": " + rep.violations.front());
    }
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(records.size())));
  std::vector<MaterialRecord> out(records.size());
  std::vector<std::exception_ptr> failures(workers);
  auto run = [&](unsigned worker, std::size_t begin, std::size_t end) {
    try {
      for (std::size_t i = begin; i < end; ++i) out[i] = densify(std::move(records[i]), sigma);
    } catch (...) {
      failures[worker] = std::current_exception();
    }
  };
  if (workers <= 1) {
    run(0, 0, records.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (records.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(records.size(), b + chunk);
      if (b < e) pool.emplace_back(run, w, b, e);
    }
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
  std::stable_sort(out.begin(), out.end(),
                   [](const MaterialRecord& a, const MaterialRecord& b) { return a.id < b.id; });
  return out;
}

}  // namespace xact
