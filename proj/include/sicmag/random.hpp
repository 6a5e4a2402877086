#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sicmag {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-artifact seed: master seed, stream name and file index.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                 std::uint64_t index) {
  return splitmix64(master ^ splitmix64(fnv1a64(stream) + index));
}

inline std::vector<double> gaussian_noise(std::size_t n, double sigma, std::uint64_t seed) {
  std::vector<double> out(n, 0.0);
  if (sigma <= 0.0) return out;
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (auto& v : out) v = normal(engine);
  return out;
}

}  // namespace sicmag
