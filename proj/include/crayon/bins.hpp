#pragma once

#include "crayon/core.hpp"

#include <cmath>

namespace crayon {

inline constexpr int kMinBin = -50;
inline constexpr int kMaxBin = 50;
inline constexpr int kBinCount = kMaxBin - kMinBin + 1;
inline constexpr double kBinWidth = 0.02;

/// Classification label for one normalized direction component.
struct BinIndex {
  int value = 0;

  /// Column of this label in a logit row.
  int slot() const { return value - kMinBin; }
  static BinIndex from_slot(int slot) { return {slot + kMinBin}; }

  auto operator<=>(const BinIndex&) const = default;
};

inline BinIndex discretize(double v) {
  if (!std::isfinite(v) || std::abs(v) > 1.0 + 1e-9)
    throw Error(ErrorCode::invalid_argument, "component outside [-1, 1]");
  const long b = std::lround(std::clamp(v, -1.0, 1.0) / kBinWidth);
  return {static_cast<int>(std::clamp<long>(b, kMinBin, kMaxBin))};
}

inline double undiscretize(BinIndex b) { return kBinWidth * b.value; }

inline double quantize(double v) { return undiscretize(discretize(v)); }

inline Vec3 quantize(const Vec3& v) { return {quantize(v.x()), quantize(v.y()), quantize(v.z())}; }

}  // namespace crayon
