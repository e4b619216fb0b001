#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "xact/data/byte_io.hpp"
#include "xact/data/types.hpp"

namespace xact {

// Layout (little-endian):
//   "XACT" | version u32 = 1 | record count u64 | records... | crc32 u32 over the records
// Record:
//   id u64 | n u8 | (z u8, fraction f32) x n | tag u8 (0 stick, 1 dense)
//   stick: count u16 | (two_theta f32, intensity f32) x count ; dense: 4250 x f32
//   target mask u8 (bit 0 ef, 1 band_gap, 2 crystal_system, 3 space_group)
//   then present targets: ef f32, band_gap f32, crystal_system u8, space_group u16
inline constexpr char kShardMagic[4] = {'X', 'A', 'C', 'T'};
inline constexpr std::uint32_t kShardVersion = 1;

enum class ShardErrc { bad_magic, unsupported_version, truncated, checksum_mismatch, corrupt };

inline const char* shard_errc_name(ShardErrc c) {
  switch (c) {
    case ShardErrc::bad_magic: return "BadMagic";
    case ShardErrc::unsupported_version: return "UnsupportedVersion";
    case ShardErrc::truncated: return "Truncated";
    case ShardErrc::checksum_mismatch: return "ChecksumMismatch";
    case ShardErrc::corrupt: return "Corrupt";
  }
  return "?";
}

class ShardError : public Error {
 public:
  ShardError(ShardErrc code, const std::string& what)
      : Error(ErrorKind::data, std::string(shard_errc_name(code)) + ": " + what), code_(code) {}
  ShardErrc code() const noexcept { return code_; }

 private:
  ShardErrc code_;
};

// Loaded fractions within this distance of summing to one are rescaled;
// anything tighter than the validation tolerance is left bit-for-bit alone.
inline constexpr double kRenormalizeWindow = 1e-4;

inline void renormalize_fractions(Composition& comp) {
  const double s = comp.fraction_sum();
  const double dev = std::abs(s - 1.0);
  if (dev > 1e-6 && dev <= kRenormalizeWindow)
    for (auto& e : comp.entries) e.fraction = static_cast<float>(e.fraction / s);
}

namespace detail {

inline void encode_record(io::Writer& w, const MaterialRecord& r) {
  w.u64(r.id);
  if (r.composition.entries.size() > 255) throw data_error("composition too large for shard");
  w.u8(static_cast<std::uint8_t>(r.composition.entries.size()));
  for (const auto& e : r.composition.entries) {
    w.u8(e.z);
    w.f32(e.fraction);
  }
  if (const auto* s = std::get_if<StickPattern>(&r.xrd)) {
    if (s->peaks.size() > 0xFFFF) throw data_error("stick pattern too large for shard");
    w.u8(0);
    w.u16(static_cast<std::uint16_t>(s->peaks.size()));
    for (const auto& p : s->peaks) {
      w.f32(p.two_theta);
      w.f32(p.intensity);
    }
  } else {
    const auto& v = std::get<XrdVector>(r.xrd);
    if (v.values.size() != static_cast<std::size_t>(XrdGrid::points))
      throw data_error("dense XRD must have 4250 values");
    w.u8(1);
    for (float x : v.values) w.f32(x);
  }
  const auto& t = r.targets;
  std::uint8_t mask = 0;
  if (t.ef) mask |= 1;
  if (t.band_gap) mask |= 2;
  if (t.crystal_system) mask |= 4;
  if (t.space_group) mask |= 8;
  w.u8(mask);
  if (t.ef) w.f32(*t.ef);
  if (t.band_gap) w.f32(*t.band_gap);
  if (t.crystal_system) w.u8(static_cast<std::uint8_t>(*t.crystal_system));
  if (t.space_group) w.u16(*t.space_group);
}

template <class R>
MaterialRecord decode_record(R& in) {
  MaterialRecord r;
  r.id = in.u64();
  const int n = in.u8();
  r.composition.entries.resize(static_cast<std::size_t>(n));
  for (auto& e : r.composition.entries) {
    e.z = in.u8();
    e.fraction = in.f32();
  }
  const auto tag = in.u8();
  if (tag == 0) {
    StickPattern s;
    s.peaks.resize(in.u16());
    for (auto& p : s.peaks) {
      p.two_theta = in.f32();
      p.intensity = in.f32();
    }
    r.xrd = std::move(s);
  } else if (tag == 1) {
    XrdVector v;
    v.values.resize(XrdGrid::points);
    for (auto& x : v.values) x = in.f32();
    r.xrd = std::move(v);
  } else {
    throw ShardError(ShardErrc::corrupt, "unknown xrd tag " + std::to_string(tag));
  }
  const auto mask = in.u8();
  if (mask & ~0x0F) throw ShardError(ShardErrc::corrupt, "unknown target bits");
  if (mask & 1) r.targets.ef = in.f32();
  if (mask & 2) r.targets.band_gap = in.f32();
  if (mask & 4) {
    const auto cs = in.u8();
    if (cs >= kCrystalSystemCount) throw ShardError(ShardErrc::corrupt, "crystal system index");
    r.targets.crystal_system = static_cast<CrystalSystem>(cs);
  }
  if (mask & 8) r.targets.space_group = in.u16();
  renormalize_fractions(r.composition);
  return r;
}

}  // namespace detail

inline std::string encode_shard(const std::vector<MaterialRecord>& records) {
  io::Writer body;
  for (const auto& r : records) detail::encode_record(body, r);
  io::Writer out;
  out.bytes(std::string_view(kShardMagic, 4));
  out.u32(kShardVersion);
  out.u64(records.size());
  out.bytes(body.buffer());
  out.u32(io::crc32(body.buffer()));
  return std::move(out.buffer());
}

inline std::vector<MaterialRecord> decode_shard(std::string_view bytes) {
  auto truncated = [] { throw ShardError(ShardErrc::truncated, "unexpected end of shard"); };
  io::Reader in(bytes, truncated);
  if (bytes.size() >= 4 && bytes.substr(0, 4) != std::string_view(kShardMagic, 4))
    throw ShardError(ShardErrc::bad_magic, "expected \"XACT\"");
  in.bytes(4);
  const auto version = in.u32();
  if (version != kShardVersion)
    throw ShardError(ShardErrc::unsupported_version, "version " + std::to_string(version));
  const auto count = in.u64();
  const std::size_t body_start = in.position();
  std::vector<MaterialRecord> records;
  // The smallest record is 16 bytes; a larger count cannot fit in what is left.
  if (count > in.remaining() / 16 + 1) truncated();
  records.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) records.push_back(detail::decode_record(in));
  const std::size_t body_end = in.position();
  const auto stored = in.u32();
  if (in.remaining() != 0)
    throw ShardError(ShardErrc::corrupt, std::to_string(in.remaining()) + " trailing bytes");
  if (stored != io::crc32(bytes.substr(body_start, body_end - body_start)))
    throw ShardError(ShardErrc::checksum_mismatch, "payload CRC32 does not match");
  return records;
}

inline void write_shard(const std::vector<MaterialRecord>& records, const std::string& path) {
  io::write_file(path, encode_shard(records));
}

inline std::vector<MaterialRecord> read_shard(const std::string& path) {
  return decode_shard(io::read_file(path));
}

}  // namespace xact
