#pragma once

// Symmetric linear fixed-point quantization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "errors.hpp"

namespace sdflyer {

struct QuantSpec {
  double scale = 1.0;      // integer units per real unit
  int magnitude_bits = 24;  // signed range [-2^(b-1), 2^(b-1) - 1]

  QuantSpec() = default;
  QuantSpec(double scale_, int bits) : scale(scale_), magnitude_bits(bits) {
    require(scale > 0.0 && std::isfinite(scale), ErrorKind::Config, "QuantSpec: scale must be positive");
    require(bits >= 2 && bits <= 24, ErrorKind::Config, "QuantSpec: magnitude_bits must be in [2, 24]");
  }

  std::int64_t max_int() const { return (std::int64_t{1} << (magnitude_bits - 1)) - 1; }
  std::int64_t min_int() const { return -(std::int64_t{1} << (magnitude_bits - 1)); }
  bool contains(std::int64_t n) const { return n >= min_int() && n <= max_int(); }

  // Largest real magnitude that survives quantization without clamping.
  double real_max() const { return static_cast<double>(max_int()) / scale; }
  double real_min() const { return static_cast<double>(min_int()) / scale; }
};

// Round half away from zero.
inline std::int64_t round_half_away(double v) {
  return static_cast<std::int64_t>(v < 0.0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5));
}

inline std::int64_t quantize(double x, const QuantSpec& spec) {
  const double v = x * spec.scale;
  if (v >= static_cast<double>(spec.max_int())) return spec.max_int();
  if (v <= static_cast<double>(spec.min_int())) return spec.min_int();
  return std::clamp(round_half_away(v), spec.min_int(), spec.max_int());
}

inline double dequantize(std::int64_t n, const QuantSpec& spec) {
  require(spec.contains(n), ErrorKind::Integrity,
          "dequantize: " + std::to_string(n) + " outside " + std::to_string(spec.magnitude_bits) + "-bit range");
  return static_cast<double>(n) / spec.scale;
}

}  // namespace sdflyer
