#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "xact/data/types.hpp"
#include "xact/error.hpp"
#include "xact/train/rng.hpp"

namespace xact {

struct DatasetSplit {
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> test_ids;
  std::uint64_t seed = 0;
};

/// Shuffles with the seed's "shuffle" stream, then cuts at round(train_frac * n).
inline DatasetSplit split_dataset(const std::vector<std::uint64_t>& ids, double train_frac,
                                  std::uint64_t seed) {
  if (ids.empty()) throw data_error("split_dataset: empty id list");
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw usage_error("split_dataset: train_frac must lie in (0, 1)");
  std::unordered_set<std::uint64_t> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) throw data_error("split_dataset: ids are not unique");

  std::vector<std::uint64_t> order = ids;
  RngStreams streams(seed);
  std::shuffle(order.begin(), order.end(), streams.shuffle);

  const auto n_train = static_cast<std::size_t>(
      std::llround(train_frac * static_cast<double>(order.size())));
  DatasetSplit split;
  split.seed = seed;
  split.train_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return split;
}

inline nlohmann::json split_to_json(const DatasetSplit& s) {
  return {{"seed", s.seed}, {"train_ids", s.train_ids}, {"test_ids", s.test_ids}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw data_error("split manifest: expected an object");
  for (const auto& [k, _] : j.items())
    if (k != "seed" && k != "train_ids" && k != "test_ids") throw data_error("split manifest: unknown key '" + k + "'");
  DatasetSplit s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_ids = j.at("train_ids").get<std::vector<std::uint64_t>>();
    s.test_ids = j.at("test_ids").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("split manifest: ") + e.what());
  }
  return s;
}

/// Records partitioned by a split manifest; every listed id must be present.
inline std::pair<std::vector<MaterialRecord>, std::vector<MaterialRecord>> apply_split(
    std::vector<MaterialRecord> records, const DatasetSplit& split) {
  std::unordered_map<std::uint64_t, std::size_t> at;
  for (std::size_t i = 0; i < records.size(); ++i) at.emplace(records[i].id, i);
  auto take = [&](const std::vector<std::uint64_t>& ids) {
    std::vector<MaterialRecord> out;
    out.reserve(ids.size());
    for (auto id : ids) {
      auto it = at.find(id);
      if (it == at.end()) throw data_error("split manifest lists id " + std::to_string(id) + " which is not in the data");
      out.push_back(records[it->second]);
    }
    return out;
  };
  return {take(split.train_ids), take(split.test_ids)};
}

}  // namespace xact
