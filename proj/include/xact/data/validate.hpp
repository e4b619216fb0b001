#pragma once

#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xact/data/types.hpp"

namespace xact {

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
  void add(std::string message) { violations.push_back(std::move(message)); }
};

namespace detail {
inline std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}
}  // namespace detail

inline constexpr double kFractionSumTolerance = 1e-6;

inline void validate_composition(const Composition& comp, ValidationReport& report) {
  const auto n = comp.entries.size();
  if (n == 0) report.add("composition has no elements");
  if (n > static_cast<std::size_t>(kMaxElements))
    report.add("composition has " + std::to_string(n) + " elements, at most 16 allowed");
  std::set<int> seen;
  for (const auto& e : comp.entries) {
    if (e.z < 1 || e.z > kMaxAtomicNumber)
      report.add("atomic number " + std::to_string(e.z) + " outside [1, 103]");
    if (!seen.insert(e.z).second) report.add("duplicate atomic number " + std::to_string(e.z));
    if (!std::isfinite(e.fraction) || e.fraction <= 0.0f || e.fraction > 1.0f)
      report.add("fraction " + detail::fmt_real(e.fraction) + " of z=" + std::to_string(e.z) +
                 " outside (0, 1]");
  }
  if (n > 0) {
    const double s = comp.fraction_sum();
    if (!(std::abs(s - 1.0) <= kFractionSumTolerance))
      report.add("fractions sum " + detail::fmt_real(s) + " ≠ 1.0");
  }
}

inline void validate_sticks(const StickPattern& p, ValidationReport& report) {
  if (p.peaks.empty()) report.add("stick pattern is empty");
  if (p.peaks.size() > 0xFFFF) report.add("stick pattern has more than 65535 peaks");
  bool any_positive = false;
  for (const auto& pk : p.peaks) {
    if (!std::isfinite(pk.two_theta) || pk.two_theta < XrdGrid::start ||
        pk.two_theta > XrdGrid::stop)
      report.add("peak at two_theta " + detail::fmt_real(pk.two_theta) + " outside [5, 90]");
    if (!std::isfinite(pk.intensity) || pk.intensity < 0.0f)
      report.add("peak intensity " + detail::fmt_real(pk.intensity) + " is negative or non-finite");
    if (pk.intensity > 0.0f) any_positive = true;
  }
  if (!p.peaks.empty() && !any_positive) report.add("stick pattern has no positive intensity");
}

inline void validate_dense(const XrdVector& v, ValidationReport& report) {
  if (v.values.size() != static_cast<std::size_t>(XrdGrid::points)) {
    report.add("dense XRD has " + std::to_string(v.values.size()) + " values, expected 4250");
    return;
  }
  for (float x : v.values) {
    if (!std::isfinite(x) || x < 0.0f || x > 100.0f) {
      report.add("dense XRD value " + detail::fmt_real(x) + " outside [0, 100]");
      return;
    }
  }
}

inline void validate_targets(const TargetSet& t, ValidationReport& report) {
  if (t.ef && !std::isfinite(*t.ef)) report.add("ef is non-finite");
  if (t.band_gap && (!std::isfinite(*t.band_gap) || *t.band_gap < 0.0f))
    report.add("band_gap " + detail::fmt_real(*t.band_gap) + " is negative or non-finite");
  if (t.crystal_system && static_cast<int>(*t.crystal_system) >= kCrystalSystemCount)
    report.add("crystal_system index out of range");
  if (t.space_group && (*t.space_group < 1 || *t.space_group > kSpaceGroupCount))
    report.add("space_group " + std::to_string(*t.space_group) + " outside [1, 230]");
}

/// Lists every violated invariant; never throws.
inline ValidationReport validate_record(const MaterialRecord& record) {
  ValidationReport report;
  validate_composition(record.composition, report);
  if (const auto* s = std::get_if<StickPattern>(&record.xrd))
    validate_sticks(*s, report);
  else
    validate_dense(std::get<XrdVector>(record.xrd), report);
  validate_targets(record.targets, report);
  return report;
}

/// Validates each record plus id uniqueness across the set.
inline ValidationReport validate_dataset(const std::vector<MaterialRecord>& records) {
  ValidationReport report;
  std::set<std::uint64_t> ids;
  for (const auto& r : records) {
    auto one = validate_record(r);
    for (auto& v : one.violations) report.add("record " + std::to_string(r.id) + ": " + v);
    if (!ids.insert(r.id).second) report.add("duplicate record id " + std::to_string(r.id));
  }
  return report;
}

}  // namespace xact
