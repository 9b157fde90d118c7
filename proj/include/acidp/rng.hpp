#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace acidp {

// splitmix64 finalizer; whitens raw seeds before they reach an engine.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_label(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : label) {
    h = (h ^ c) * 1099511628211ULL;
  }
  return splitmix64(seed ^ h);
}

inline std::uint64_t mix_index(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index));
}

// One independent stream per (seed, label, index). Trials, policies and
// environments each derive their own stream so runs replay exactly and
// reordering one stream never perturbs another.
inline std::mt19937_64 make_stream(std::uint64_t base_seed, std::string_view label,
                                   std::uint64_t index = 0) {
  return std::mt19937_64(mix_index(mix_label(base_seed, label), index));
}

}  // namespace acidp
