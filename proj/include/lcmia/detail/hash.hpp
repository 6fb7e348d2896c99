#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

// Stable, platform-independent hashing and seeded draws. std::hash and the
// <random> distributions are implementation-defined, which would make seeded
// runs differ between standard libraries.
namespace lcmia::detail {

constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

// Uniform in [0, 1).
constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller over two derived uniforms.
inline double standard_normal(std::uint64_t h) {
  double u1 = unit_interval(mix(h, 1));
  double u2 = unit_interval(mix(h, 2));
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lcmia::detail
