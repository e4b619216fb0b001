#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <json.hpp>

#include "xact/data/types.hpp"
#include "xact/train/rng.hpp"

namespace xact {

/// Generator settings for synthetic records with closed-form targets.
///
/// Composition signal h_c is the mean atomic number rescaled by the pool range.
/// XRD signal h_x is the mean stick position rescaled to [0, 1] over [5, 90].
/// With lattice_coupling = 0 the two are drawn independently, so a
/// single-modality model cannot recover the other modality's term. A positive
/// coupling blends h_c into the lattice fraction, which ties peak positions to
/// composition:
///   ef       = alpha * h_c + beta * h_x + N(0, noise_std^2)
///   band_gap = gamma * (1 - h_c) + delta * lattice_fraction
/// crystal_system buckets the dominant peak position into seven equal bins.
struct SynthSpec {
  std::vector<int> element_pool = [] {
    std::vector<int> v(40);
    std::iota(v.begin(), v.end(), 3);
    return v;
  }();
  int min_elements = 1;
  int max_elements = 4;
  int min_peaks = 3;
  int max_peaks = 12;
  double lattice_min = 4.0;  // angstrom
  double lattice_max = 8.0;
  double lattice_coupling = 0.0;  // weight of h_c in the lattice fraction, in [0, 1]
  double wavelength = 1.5406;  // Cu K-alpha
  double alpha = 1.0;
  double beta = 1.0;
  double noise_std = 0.02;
  double gamma = 1.0;
  double delta = 1.0;
};

inline void validate_synth_spec(const SynthSpec& s) {
  if (s.element_pool.empty()) throw usage_error("synth spec: empty element pool");
  for (int z : s.element_pool)
    if (z < 1 || z > kMaxAtomicNumber) throw usage_error("synth spec: element outside [1, 103]");
  std::vector<int> pool = s.element_pool;
  std::sort(pool.begin(), pool.end());
  if (std::adjacent_find(pool.begin(), pool.end()) != pool.end())
    throw usage_error("synth spec: duplicate element in pool");
  if (s.min_elements < 1 || s.max_elements < s.min_elements || s.max_elements > kMaxElements ||
      static_cast<std::size_t>(s.max_elements) > s.element_pool.size())
    throw usage_error("synth spec: invalid element count range");
  if (s.min_peaks < 1 || s.max_peaks < s.min_peaks || s.max_peaks > 16)
    throw usage_error("synth spec: invalid peak count range");
  if (!(s.lattice_min >= 4.0) || !(s.lattice_max > s.lattice_min) || s.lattice_max > 12.0)
    throw usage_error("synth spec: lattice range must lie within [4, 12] angstrom");
  if (!(s.lattice_coupling >= 0.0 && s.lattice_coupling <= 1.0))
    throw usage_error("synth spec: lattice_coupling must lie in [0, 1]");
  if (!(s.noise_std >= 0.0) || !(s.gamma >= 0.0) || !(s.delta >= 0.0))
    throw usage_error("synth spec: noise_std, gamma and delta must be non-negative");
}

namespace detail {

// Squared reflection indices per structural family; each yields >= 5 peaks
// below 90 degrees for any lattice >= 4 angstrom.
inline const std::array<std::vector<int>, 7>& reflection_families() {
  static const std::array<std::vector<int>, 7> f = {{
      {1, 2, 3, 4, 5, 6, 8, 9, 10, 11, 12, 13, 14, 16, 17, 18},
      {2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 30, 32, 34},
      {3, 4, 8, 11, 12, 16, 19, 20, 24, 27, 32, 35, 36, 40, 43, 44},
      {1, 2, 4, 5, 8, 9, 10, 13, 16, 17, 18, 20, 25, 26, 29, 32},
      {1, 3, 4, 7, 9, 12, 13, 16, 19, 21, 25, 27, 28, 31, 36, 37},
      {2, 3, 5, 6, 7, 9, 11, 13, 14, 15, 17, 19, 21, 22, 23, 25},
      {1, 4, 5, 9, 10, 13, 17, 18, 20, 25, 26, 29, 34, 36, 37, 40},
  }};
  return f;
}

inline constexpr std::array<int, 8> kSpaceGroupStart = {1, 3, 16, 75, 143, 168, 195, 231};

}  // namespace detail

/// Mean atomic number rescaled to [0, 1] by the pool's range.
inline double composition_signal(const Composition& comp, const SynthSpec& spec) {
  const auto [lo, hi] = std::minmax_element(spec.element_pool.begin(), spec.element_pool.end());
  double mean_z = 0.0;
  for (const auto& e : comp.entries) mean_z += e.z * static_cast<double>(e.fraction);
  const double span = std::max(1, *hi - *lo);
  return (mean_z - *lo) / span;
}

/// Unweighted mean stick position rescaled to [0, 1].
inline double xrd_signal(const StickPattern& sticks) {
  double m = 0.0;
  for (const auto& p : sticks.peaks) m += p.two_theta;
  m /= static_cast<double>(sticks.peaks.size());
  return (m - XrdGrid::start) / (XrdGrid::stop - XrdGrid::start);
}

/// Seven equal-width bins of the strongest stick's position.
inline CrystalSystem dominant_peak_class(const StickPattern& sticks) {
  auto it = std::max_element(sticks.peaks.begin(), sticks.peaks.end(),
                             [](const Peak& a, const Peak& b) { return a.intensity < b.intensity; });
  const double frac = (it->two_theta - XrdGrid::start) / (XrdGrid::stop - XrdGrid::start);
  const int bin = std::clamp(static_cast<int>(frac * kCrystalSystemCount), 0, kCrystalSystemCount - 1);
  return static_cast<CrystalSystem>(bin);
}

/// Deterministic synthetic record with stick-pattern XRD.
inline MaterialRecord synth_record(std::uint64_t seed, const SynthSpec& spec, std::uint64_t id = 0) {
  validate_synth_spec(spec);
  Rng rng(splitmix64(seed));
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  MaterialRecord r;
  r.id = id;

  const int n_elem = uniform_int(spec.min_elements, spec.max_elements);
  std::vector<int> pool = spec.element_pool;
  std::vector<int> weights(static_cast<std::size_t>(n_elem));
  for (int i = 0; i < n_elem; ++i) {
    const int pick = uniform_int(i, static_cast<int>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick)]);
    weights[static_cast<std::size_t>(i)] = uniform_int(1, 6);
  }
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (int i = 0; i < n_elem; ++i)
    r.composition.entries.push_back({static_cast<std::uint8_t>(pool[static_cast<std::size_t>(i)]),
                                     static_cast<float>(weights[static_cast<std::size_t>(i)] / wsum)});

  const int family = uniform_int(0, 6);
  const int n_peaks = uniform_int(spec.min_peaks, spec.max_peaks);
  const double hc = composition_signal(r.composition, spec);
  const double lattice_frac = spec.lattice_coupling * hc + (1.0 - spec.lattice_coupling) * uniform(0.0, 1.0);
  const double lattice = spec.lattice_min + (spec.lattice_max - spec.lattice_min) * lattice_frac;
  StickPattern sticks;
  for (int s2 : detail::reflection_families()[static_cast<std::size_t>(family)]) {
    const double sin_theta = spec.wavelength * std::sqrt(static_cast<double>(s2)) / (2.0 * lattice);
    if (sin_theta >= 1.0) break;
    const double two_theta = 2.0 * std::asin(sin_theta) * 180.0 / std::numbers::pi;
    if (two_theta >= XrdGrid::stop - XrdGrid::spacing) break;
    if (two_theta < XrdGrid::start) continue;
    if (static_cast<int>(sticks.peaks.size()) == n_peaks) break;
    sticks.peaks.push_back({static_cast<float>(two_theta), 0.0f});
  }
  for (auto& p : sticks.peaks) p.intensity = static_cast<float>(100.0 * (0.1 + 0.9 * uniform(0.0, 1.0)));
  if (static_cast<int>(sticks.peaks.size()) < spec.min_peaks)
    throw usage_error("synth spec: lattice range admits too few reflections");

  const double hx = xrd_signal(sticks);
  const double noise = spec.noise_std > 0.0 ? std::normal_distribution<double>(0.0, spec.noise_std)(rng) : 0.0;

  const CrystalSystem cs = dominant_peak_class(sticks);
  const int csi = static_cast<int>(cs);
  const int sg_start = detail::kSpaceGroupStart[static_cast<std::size_t>(csi)];
  const int sg_width = detail::kSpaceGroupStart[static_cast<std::size_t>(csi) + 1] - sg_start;

  r.targets.ef = static_cast<float>(spec.alpha * hc + spec.beta * hx + noise);
  r.targets.band_gap = static_cast<float>(spec.gamma * (1.0 - hc) + spec.delta * lattice_frac);
  r.targets.crystal_system = cs;
  r.targets.space_group = static_cast<std::uint16_t>(sg_start + (family * 13 + n_peaks) % sg_width);
  r.xrd = std::move(sticks);
  return r;
}

/// Records 0..count-1, each from its own derived seed.
inline std::vector<MaterialRecord> synth_dataset(std::size_t count, std::uint64_t seed, const SynthSpec& spec) {
  validate_synth_spec(spec);
  std::vector<MaterialRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_record(derive_seed(seed, i), spec, i));
  return out;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  return {{"element_pool", s.element_pool}, {"min_elements", s.min_elements},
          {"max_elements", s.max_elements}, {"min_peaks", s.min_peaks},
          {"max_peaks", s.max_peaks},       {"lattice_min", s.lattice_min},
          {"lattice_max", s.lattice_max},   {"lattice_coupling", s.lattice_coupling},
          {"wavelength", s.wavelength},
          {"alpha", s.alpha},               {"beta", s.beta},
          {"noise_std", s.noise_std},       {"gamma", s.gamma},
          {"delta", s.delta}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  const auto defaults = synth_spec_to_json(s);
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) throw usage_error("synth spec: unknown key '" + key + "'");
  try {
    if (j.contains("element_pool")) s.element_pool = j.at("element_pool").get<std::vector<int>>();
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::remove_reference_t<decltype(field)>>();
    };
    get("min_elements", s.min_elements);
    get("max_elements", s.max_elements);
    get("min_peaks", s.min_peaks);
    get("max_peaks", s.max_peaks);
    get("lattice_min", s.lattice_min);
    get("lattice_max", s.lattice_max);
    get("lattice_coupling", s.lattice_coupling);
    get("wavelength", s.wavelength);
    get("alpha", s.alpha);
    get("beta", s.beta);
    get("noise_std", s.noise_std);
    get("gamma", s.gamma);
    get("delta", s.delta);
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("synth spec: ") + e.what());
  }
  validate_synth_spec(s);
  return s;
}

}  // namespace xact
