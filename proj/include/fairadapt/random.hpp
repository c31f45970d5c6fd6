#pragma once

// Counter-based randomness. Every draw in the library is a pure function of
// (seed, tags...), so results do not depend on evaluation order or on how
// work is split across threads.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace fairadapt::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of a running key with one more tag.
constexpr std::uint64_t combine(std::uint64_t key, std::uint64_t tag) noexcept {
  return splitmix64(key ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t k = splitmix64(seed);
  for (auto t : tags) k = combine(k, t);
  return k;
}

/// FNV-1a, used to turn variable names into stable stream tags.
constexpr std::uint64_t hash_name(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Maps 64 random bits to the open interval (0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
  return to_unit(key(seed, tags));
}

inline std::mt19937_64 engine(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return std::mt19937_64(key(seed, tags));
}

// Stream purposes, kept distinct so that no two consumers share draws.
enum class Purpose : std::uint64_t {
  forest = 1,
  jitter = 2,
  transport_sample = 3,
  sem_quantile = 4,
  split = 5,
  subsample = 6,
  experiment = 7,
};

constexpr std::uint64_t tag(Purpose p) noexcept { return static_cast<std::uint64_t>(p); }

}  // namespace fairadapt::rng
