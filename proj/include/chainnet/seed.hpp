#pragma once

#include <cstdint>
#include <initializer_list>

namespace chainnet {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derives a child seed from a master seed and an ordered list of
// coordinates (scheme, snr, frame index, ...).
inline constexpr std::uint64_t derive_seed(std::uint64_t master,
                                           std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t p : parts) {
    h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
  }
  return h;
}

// Uniform double in [0, 1) from a 64-bit hash.
inline constexpr double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace chainnet
