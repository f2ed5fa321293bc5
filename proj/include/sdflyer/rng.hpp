#pragma once

// Portable seeded generator. The stream is SplitMix64 (Steele, Lea & Flood):
//
//   counter += 0x9E3779B97F4A7C15
//   z = counter
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   out = z ^ (z >> 31)
//
// Derived draws are defined here too (standard library distributions are
// implementation-defined, so they would break cross-platform reproducibility):
//   uniform01  = (out >> 11) * 2^-53                       in [0, 1)
//   uniform_index(n) = Lemire multiply-shift with rejection in [0, n)
//   normal     = Box-Muller, cos branch first, sin branch cached

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace sdflyer {

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), counter_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = counter_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(phi);
    has_cached_ = true;
    return r * std::cos(phi);
  }

  // Fisher-Yates, back to front.
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Independent child stream, e.g. one per environment.
  SeededRng fork(std::uint64_t stream) const {
    SeededRng tmp(seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    return SeededRng(tmp.next_u64());
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace sdflyer
