#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace xact {

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a named sub-stream of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  return splitmix64(master ^ fnv1a64(label));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) + index);
}

using Rng = std::mt19937_64;

/// Independent generators keyed by fixed labels. Drawing from one never advances another.
struct RngStreams {
  std::uint64_t master = 0;
  Rng init;
  Rng shuffle;
  Rng task_sampling;
  Rng masking;
  Rng dropout;

  explicit RngStreams(std::uint64_t seed = 0)
      : master(seed),
        init(derive_seed(seed, "init")),
        shuffle(derive_seed(seed, "shuffle")),
        task_sampling(derive_seed(seed, "task_sampling")),
        masking(derive_seed(seed, "masking")),
        dropout(derive_seed(seed, "dropout")) {}

  template <class F>
  void for_each(F&& f) {
    f("init", init);
    f("shuffle", shuffle);
    f("task_sampling", task_sampling);
    f("masking", masking);
    f("dropout", dropout);
  }
};

inline std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
}

}  // namespace xact
