#pragma once

// Seed derivation for replicate streams.
//
// Every random stream in an experiment is keyed by
// (master seed, experiment, parameter tuple, replicate, role) and the key is
// folded through splitmix64. Streams for different roles never share state,
// so walk, holding times and disorder can be held fixed independently.

#include <bit>
#include <cstdint>
#include <random>
#include <string_view>

namespace glassclock {

using Rng = std::mt19937_64;

enum class StreamRole : std::uint64_t {
  disorder = 1,
  walk = 2,
  holds = 3,
  aux = 4,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

// FNV-1a, then mixed.
constexpr std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

constexpr std::uint64_t hash_double(double v) noexcept {
  return splitmix64(std::bit_cast<std::uint64_t>(v));
}

struct StreamKey {
  std::uint64_t master = 0;
  std::uint64_t experiment = 0;
  std::uint64_t param_tuple = 0;
  std::uint64_t replicate = 0;
  StreamRole role = StreamRole::aux;
};

constexpr std::uint64_t derive_seed(const StreamKey& key) noexcept {
  std::uint64_t h = splitmix64(key.master);
  h = hash_combine(h, key.experiment);
  h = hash_combine(h, key.param_tuple);
  h = hash_combine(h, key.replicate);
  h = hash_combine(h, static_cast<std::uint64_t>(key.role));
  return h;
}

inline Rng make_stream(const StreamKey& key) { return Rng{derive_seed(key)}; }

inline Rng make_stream(std::uint64_t seed) { return Rng{splitmix64(seed)}; }

}  // namespace glassclock
