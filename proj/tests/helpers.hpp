#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "xact/model/config.hpp"
#include "xact/xrd/pipeline.hpp"
#include "xact/xrd/synth.hpp"

namespace xact::testing {

inline std::vector<MaterialRecord> dense_records(std::size_t n, std::uint64_t seed) {
  return prepare_records(synth_dataset(n, seed, SynthSpec{}), 0.1, 1);
}

inline std::vector<const MaterialRecord*> pointers(const std::vector<MaterialRecord>& recs) {
  std::vector<const MaterialRecord*> out;
  for (const auto& r : recs) out.push_back(&r);
  return out;
}

inline ModelConfig small_config(Modality m = Modality::bimodal) {
  ModelConfig c;
  c.modality = m;
  c.composition = {1, 8, 2, 16};
  c.xrd = {1, 8, 2, 16};
  c.fusion = {1, 12, 2, 16};
  c.dropout = 0.0;
  return c;
}

}  // namespace xact::testing

namespace xact::testing {

/// Valid record with random shape: stick or dense XRD, any subset of targets.
inline MaterialRecord random_record(Rng& rng, std::uint64_t id) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  MaterialRecord r;
  r.id = id;
  const int n = pick(1, 16);
  std::vector<int> zs(103);
  for (int i = 0; i < 103; ++i) zs[static_cast<std::size_t>(i)] = i + 1;
  std::shuffle(zs.begin(), zs.end(), rng);
  std::vector<float> w(static_cast<std::size_t>(n));
  float s = 0;
  for (auto& x : w) s += (x = 0.05f + u(rng));
  for (int i = 0; i < n; ++i)
    r.composition.entries.push_back({static_cast<std::uint8_t>(zs[static_cast<std::size_t>(i)]), w[static_cast<std::size_t>(i)] / s});
  if (pick(0, 1)) {
    StickPattern p;
    const int k = pick(1, 40);
    for (int i = 0; i < k; ++i) p.peaks.push_back({5.0f + 84.9f * u(rng), 100.0f * u(rng) + 0.01f});
    r.xrd = p;
  } else {
    XrdVector v;
    v.values.resize(XrdGrid::points);
    for (auto& x : v.values) x = 100.0f * u(rng);
    r.xrd = v;
  }
  if (pick(0, 1)) r.targets.ef = -3.0f + 4.0f * u(rng);
  if (pick(0, 1)) r.targets.band_gap = 5.0f * u(rng);
  if (pick(0, 1)) r.targets.crystal_system = static_cast<CrystalSystem>(pick(0, 6));
  if (pick(0, 1)) r.targets.space_group = static_cast<std::uint16_t>(pick(1, 230));
  return r;
}

}  // namespace xact::testing
