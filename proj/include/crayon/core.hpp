#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crayon {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Machine-readable failure categories. The service layer forwards these
/// verbatim as error codes.
enum class ErrorCode {
  invalid_argument,
  behind_camera,
  invalid_depth,
  insufficient_support,
  degenerate,
  no_graspable_region,
  malformed_action,
  non_convergence,
  divergence,
  codec,
  validation,
  selector,
  not_found,
  invalid_state,
  io,
  hash_mismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::behind_camera: return "behind_camera";
    case ErrorCode::invalid_depth: return "invalid_depth";
    case ErrorCode::insufficient_support: return "insufficient_support";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::no_graspable_region: return "no_graspable_region";
    case ErrorCode::malformed_action: return "malformed_action";
    case ErrorCode::non_convergence: return "non_convergence";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::codec: return "codec";
    case ErrorCode::validation: return "validation";
    case ErrorCode::selector: return "selector";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::invalid_state: return "invalid_state";
    case ErrorCode::io: return "io";
    case ErrorCode::hash_mismatch: return "hash_mismatch";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Normalizes v or throws when its norm is below `eps`.
template <typename Derived>
auto normalized_or_throw(const Eigen::MatrixBase<Derived>& v, double eps = 1e-12,
                         ErrorCode code = ErrorCode::invalid_argument) {
  const double n = v.norm();
  if (!(n > eps)) throw Error(code, "cannot normalize a zero-length vector");
  return (v / n).eval();
}

/// Unsigned angle between two non-zero vectors, in degrees.
template <typename A, typename B>
double angle_deg(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return rad_to_deg(std::acos(std::clamp(c, -1.0, 1.0)));
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Any unit vector perpendicular to `v`.
inline Vec3 any_perpendicular(const Vec3& v) {
  const Vec3 helper = std::abs(v.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  return v.cross(helper).normalized();
}

/// Rotation taking `v` by `angle` radians about unit `axis`.
inline Vec3 rotate_about(const Vec3& v, const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis) * v;
}

/// 64-bit FNV-1a, used for config fingerprints and file hashes.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

}  // namespace crayon
