#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xact/data/shard.hpp"
#include "xact/data/types.hpp"

namespace xact {

// One record per line:
//   {"id":1,"composition":[[z,frac],...],"sticks":[[2theta,I],...] | "dense":[...],
//    "targets":{"ef":..,"band_gap":..,"crystal_system":<0..6>,"space_group":<1..230>}}
inline nlohmann::json record_to_json(const MaterialRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  auto comp = nlohmann::json::array();
  for (const auto& e : r.composition.entries) comp.push_back({e.z, e.fraction});
  j["composition"] = std::move(comp);
  if (const auto* s = std::get_if<StickPattern>(&r.xrd)) {
    auto sticks = nlohmann::json::array();
    for (const auto& p : s->peaks) sticks.push_back({p.two_theta, p.intensity});
    j["sticks"] = std::move(sticks);
  } else {
    j["dense"] = std::get<XrdVector>(r.xrd).values;
  }
  nlohmann::json t = nlohmann::json::object();
  if (r.targets.ef) t["ef"] = *r.targets.ef;
  if (r.targets.band_gap) t["band_gap"] = *r.targets.band_gap;
  if (r.targets.crystal_system) t["crystal_system"] = static_cast<int>(*r.targets.crystal_system);
  if (r.targets.space_group) t["space_group"] = *r.targets.space_group;
  j["targets"] = std::move(t);
  return j;
}

inline MaterialRecord record_from_json(const nlohmann::json& j) {
  try {
    for (const auto& [key, _] : j.items())
      if (key != "id" && key != "composition" && key != "sticks" && key != "dense" &&
          key != "targets")
        throw data_error("unknown key '" + key + "'");
    MaterialRecord r;
    r.id = j.at("id").get<std::uint64_t>();
    for (const auto& e : j.at("composition")) {
      const int z = e.at(0).get<int>();
      if (z < 0 || z > 255) throw data_error("atomic number out of range");
      r.composition.entries.push_back({static_cast<std::uint8_t>(z), e.at(1).get<float>()});
    }
    const bool has_sticks = j.contains("sticks"), has_dense = j.contains("dense");
    if (has_sticks == has_dense) throw data_error("exactly one of 'sticks' or 'dense' required");
    if (has_sticks) {
      StickPattern s;
      for (const auto& p : j.at("sticks")) s.peaks.push_back({p.at(0).get<float>(), p.at(1).get<float>()});
      r.xrd = std::move(s);
    } else {
      r.xrd = XrdVector{j.at("dense").get<std::vector<float>>()};
    }
    if (j.contains("targets")) {
      const auto& t = j.at("targets");
      for (const auto& [key, _] : t.items())
        if (key != "ef" && key != "band_gap" && key != "crystal_system" && key != "space_group")
          throw data_error("unknown target '" + key + "'");
      if (t.contains("ef")) r.targets.ef = t.at("ef").get<float>();
      if (t.contains("band_gap")) r.targets.band_gap = t.at("band_gap").get<float>();
      if (t.contains("crystal_system")) {
        const int cs = t.at("crystal_system").get<int>();
        if (cs < 0 || cs >= kCrystalSystemCount) throw data_error("crystal_system index out of range");
        r.targets.crystal_system = static_cast<CrystalSystem>(cs);
      }
      if (t.contains("space_group")) r.targets.space_group = t.at("space_group").get<std::uint16_t>();
    }
    renormalize_fractions(r.composition);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed record JSON: ") + e.what());
  }
}

inline std::string encode_jsonl(const std::vector<MaterialRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<MaterialRecord> decode_jsonl(const std::string& text) {
  std::vector<MaterialRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw data_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(record_from_json(j));
  }
  return records;
}

inline void write_jsonl(const std::vector<MaterialRecord>& records, const std::string& path) {
  io::write_file(path, encode_jsonl(records));
}

inline std::vector<MaterialRecord> read_jsonl(const std::string& path) {
  return decode_jsonl(io::read_file(path));
}

inline bool is_jsonl_path(const std::string& path) {
  auto ends = [&](const std::string& suf) {
    return path.size() >= suf.size() && path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
  };
  return ends(".jsonl") || ends(".json");
}

/// Dispatches on extension: .jsonl/.json are JSONL, anything else a binary shard.
inline std::vector<MaterialRecord> read_records(const std::string& path) {
  return is_jsonl_path(path) ? read_jsonl(path) : read_shard(path);
}

inline void write_records(const std::vector<MaterialRecord>& records, const std::string& path) {
  if (is_jsonl_path(path))
    write_jsonl(records, path);
  else
    write_shard(records, path);
}

}  // namespace xact
