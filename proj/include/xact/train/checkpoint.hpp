#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xact/data/byte_io.hpp"
#include "xact/data/shard.hpp"
#include "xact/nn/graph.hpp"

namespace xact {

// Layout (little-endian):
//   "XCKP" | version u32 = 1 | body | crc32 u32 over body
// body:
//   meta length u64 | meta JSON (UTF-8) | tensor count u32 |
//   per tensor: name length u16 | name | rows u32 | cols u32 | rows*cols f32 (row-major)
inline constexpr char kCheckpointMagic[4] = {'X', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, nn::Matrix<float>>> tensors;

  const nn::Matrix<float>* find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return &m;
    return nullptr;
  }
};

inline std::string encode_checkpoint(const CheckpointFile& ck) {
  io::Writer body;
  const std::string meta = ck.meta.dump();
  body.u64(meta.size());
  body.bytes(meta);
  body.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, m] : ck.tensors) {
    if (name.size() > 0xffff) throw usage_error("tensor name too long: " + name);
    body.u16(static_cast<std::uint16_t>(name.size()));
    body.bytes(name);
    body.u32(static_cast<std::uint32_t>(m.rows()));
    body.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) body.f32(m.data()[i]);
  }
  io::Writer out;
  out.bytes(std::string_view(kCheckpointMagic, 4));
  out.u32(kCheckpointVersion);
  out.bytes(body.buffer());
  out.u32(io::crc32(body.buffer()));
  return std::move(out.buffer());
}

inline CheckpointFile decode_checkpoint(std::string_view bytes) {
  auto truncated = [] { throw ShardError(ShardErrc::truncated, "checkpoint ends early"); };
  if (bytes.size() < 4) truncated();
  if (bytes.substr(0, 4) != std::string_view(kCheckpointMagic, 4))
    throw ShardError(ShardErrc::bad_magic, "not a checkpoint file");
  io::Reader r(bytes.substr(4), truncated);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw ShardError(ShardErrc::unsupported_version, "checkpoint version " + std::to_string(version));
  if (r.remaining() < 4) truncated();
  const std::string_view body = bytes.substr(8, bytes.size() - 12);
  io::Reader b(body, truncated);
  CheckpointFile ck;
  const auto meta_len = b.u64();
  if (meta_len > b.remaining()) truncated();
  try {
    ck.meta = nlohmann::json::parse(b.bytes(static_cast<std::size_t>(meta_len)));
  } catch (const nlohmann::json::parse_error&) {
    throw ShardError(ShardErrc::corrupt, "checkpoint metadata is not valid JSON");
  }
  const auto count = b.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = b.u16();
    std::string name(b.bytes(len));
    const auto rows = b.u32(), cols = b.u32();
    const std::uint64_t n = std::uint64_t{rows} * cols;
    if (n * 4 > b.remaining()) truncated();
    nn::Matrix<float> m(rows, cols);
    for (std::uint64_t i = 0; i < n; ++i) m.data()[i] = b.f32();
    ck.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (b.remaining() != 0) throw ShardError(ShardErrc::corrupt, "trailing bytes after the last tensor");
  io::Reader tail(bytes.substr(bytes.size() - 4), truncated);
  if (tail.u32() != io::crc32(body)) throw ShardError(ShardErrc::checksum_mismatch, "checkpoint CRC does not match");
  return ck;
}

inline void write_checkpoint(const std::string& path, const CheckpointFile& ck) {
  io::write_file(path, encode_checkpoint(ck));
}
inline CheckpointFile read_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace xact
