#pragma once

#include "crayon/core.hpp"
#include "crayon/image.hpp"
#include "crayon/rng.hpp"

#include <Eigen/Eigenvalues>

#include <optional>
#include <utility>

namespace crayon {

// Camera frame: right-handed, +x right, +y down, +z into the scene.
// Pixel (i, j) has its center at continuous coordinate (i, j), origin top-left.

struct CameraIntrinsics {
  double focal_x = 760.0;
  double focal_y = 760.0;
  double principal_x = 167.5;
  double principal_y = 167.5;
  int width = 336;
  int height = 336;

  void validate() const {
    if (!(focal_x > 0.0 && focal_y > 0.0)) throw Error(ErrorCode::invalid_argument, "focal lengths must be positive");
    if (width <= 0 || height <= 0) throw Error(ErrorCode::invalid_argument, "image size must be positive");
    if (principal_x < 0.0 || principal_y < 0.0 || principal_x > width || principal_y > height)
      throw Error(ErrorCode::invalid_argument, "principal point outside the image");
  }

  bool in_bounds(const Vec2& px) const {
    return px.x() >= -0.5 && px.y() >= -0.5 && px.x() < width - 0.5 && px.y() < height - 0.5;
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

/// World-to-camera rigid transform: p_cam = rotation * p_world + translation.
struct CameraExtrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 to_world(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  Vec3 center() const { return -(rotation.transpose() * translation); }
  Vec3 forward() const { return rotation.row(2).transpose(); }

  void validate() const {
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9)
      throw Error(ErrorCode::invalid_argument, "camera rotation must be orthonormal with det +1");
  }
};

struct Camera {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
};

inline constexpr double kDegeneratePixels = 0.5;
inline constexpr double kDirectionStepFraction = 0.05;

inline Vec2 project(const Vec3& point, const CameraIntrinsics& k, const CameraExtrinsics& e) {
  const Vec3 pc = e.to_camera(point);
  if (!(pc.z() > 1e-9)) throw Error(ErrorCode::behind_camera, "point is not in front of the camera");
  return {k.focal_x * pc.x() / pc.z() + k.principal_x, k.focal_y * pc.y() / pc.z() + k.principal_y};
}

/// 2x3 Jacobian of `project` with respect to the world point.
inline Eigen::Matrix<double, 2, 3> project_jacobian(const Vec3& point, const CameraIntrinsics& k,
                                                     const CameraExtrinsics& e) {
  const Vec3 pc = e.to_camera(point);
  if (!(pc.z() > 1e-9)) throw Error(ErrorCode::behind_camera, "point is not in front of the camera");
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> j;
  j << k.focal_x * iz, 0.0, -k.focal_x * pc.x() * iz * iz,
       0.0, k.focal_y * iz, -k.focal_y * pc.y() * iz * iz;
  return j * e.rotation;
}

inline Vec3 lift(const Vec2& pixel, double depth, const CameraIntrinsics& k, const CameraExtrinsics& e) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw Error(ErrorCode::invalid_depth, "depth must be positive");
  if (!k.in_bounds(pixel)) throw Error(ErrorCode::invalid_argument, "pixel outside the image");
  const Vec3 pc((pixel.x() - k.principal_x) / k.focal_x * depth, (pixel.y() - k.principal_y) / k.focal_y * depth,
                depth);
  return e.to_world(pc);
}

inline std::pair<int, int> nearest_pixel(const Vec2& px) {
  return {static_cast<int>(std::lround(px.x())), static_cast<int>(std::lround(px.y()))};
}

/// Lifts using the depth stored at the nearest pixel.
inline Vec3 lift(const Vec2& pixel, const DepthImage& depth, const CameraIntrinsics& k, const CameraExtrinsics& e) {
  const auto [i, j] = nearest_pixel(pixel);
  if (!depth.is_valid(i, j)) throw Error(ErrorCode::invalid_depth, "no valid depth at pixel");
  return lift(pixel, depth.at(i, j), k, e);
}

/// Unit world-frame direction of the viewing ray through `pixel`.
inline Vec3 pixel_ray(const Vec2& pixel, const CameraIntrinsics& k, const CameraExtrinsics& e) {
  const Vec3 dc((pixel.x() - k.principal_x) / k.focal_x, (pixel.y() - k.principal_y) / k.focal_y, 1.0);
  return (e.rotation.transpose() * dc).normalized();
}

inline double default_direction_step(const Vec3& origin, const CameraExtrinsics& e) {
  return kDirectionStepFraction * (origin - e.center()).norm();
}

/// Unit image direction of `dir` drawn from `origin`; empty when the projected
/// segment is shorter than kDegeneratePixels (direction close to the viewing ray).
inline std::optional<Vec2> project_direction(const Vec3& origin, const Vec3& dir, double step,
                                             const CameraIntrinsics& k, const CameraExtrinsics& e) {
  if (!(step > 0.0)) throw Error(ErrorCode::invalid_argument, "step must be positive");
  const Vec2 a = project(origin, k, e);
  const Vec2 b = project(origin + step * dir, k, e);
  const Vec2 d = b - a;
  const double len = d.norm();
  if (len < kDegeneratePixels) return std::nullopt;
  return Vec2(d / len);
}

inline std::optional<Vec2> project_direction(const Vec3& origin, const Vec3& dir, const CameraIntrinsics& k,
                                             const CameraExtrinsics& e) {
  return project_direction(origin, dir, default_direction_step(origin, e), k, e);
}

namespace detail {

inline std::optional<Vec3> fit_plane_normal(const std::vector<Vec3>& pts) {
  if (pts.size() < 3) return std::nullopt;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  if (eig.eigenvalues()(1) <= 1e-12 * std::max(1e-12, eig.eigenvalues()(2))) return std::nullopt;
  return eig.eigenvectors().col(0).normalized();
}

}  // namespace detail

/// Least-squares plane normal over the lifted neighbours of `pixel`, oriented
/// toward the camera. Only neighbours on the center pixel's surface take part:
/// the support is the largest consensus set of planes through the center point
/// and two neighbours.
inline Vec3 estimate_normal(const DepthImage& depth, const Vec2& pixel, int window, const CameraIntrinsics& k,
                            const CameraExtrinsics& e) {
  if (window < 3 || window % 2 == 0) throw Error(ErrorCode::invalid_argument, "window must be odd and >= 3");
  const auto [ci, cj] = nearest_pixel(pixel);
  const int r = window / 2;
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(window * window));
  for (int j = cj - r; j <= cj + r; ++j) {
    for (int i = ci - r; i <= ci + r; ++i) {
      if (!depth.is_valid(i, j)) continue;
      pts.push_back(lift(Vec2(i, j), depth.at(i, j), k, e));
    }
  }
  if (pts.size() < 3) throw Error(ErrorCode::insufficient_support, "fewer than 3 valid depth neighbours");

  std::vector<Vec3> support = pts;
  if (depth.is_valid(ci, cj)) {
    const Vec3 center = lift(Vec2(ci, cj), depth.at(ci, cj), k, e);
    const double tol = 1e-4 * depth.at(ci, cj);
    std::size_t best_count = 0;
    for (std::size_t a = 0; a < pts.size(); ++a) {
      for (std::size_t b = a + 1; b < pts.size(); ++b) {
        const Vec3 n = (pts[a] - center).cross(pts[b] - center);
        if (n.norm() < 1e-12) continue;
        const Vec3 nh = n.normalized();
        std::size_t count = 0;
        for (const auto& p : pts) count += std::abs((p - center).dot(nh)) < tol;
        if (count > best_count) {
          best_count = count;
          support.clear();
          for (const auto& p : pts)
            if (std::abs((p - center).dot(nh)) < tol) support.push_back(p);
        }
      }
    }
  }
  auto n = detail::fit_plane_normal(support);
  if (!n) n = detail::fit_plane_normal(pts);
  if (!n) throw Error(ErrorCode::insufficient_support, "depth neighbours are collinear");
  Vec3 out = *n;
  if (out.dot(pts.front() - e.center()) > 0.0) out = -out;
  return out;
}

/// Camera at `eye` looking at `target` with world +z as the up reference.
inline CameraExtrinsics look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = normalized_or_throw(target - eye);
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraExtrinsics e;
  e.rotation.row(0) = right.transpose();
  e.rotation.row(1) = down.transpose();
  e.rotation.row(2) = forward.transpose();
  e.translation = -(e.rotation * eye);
  return e;
}

struct CameraSamplingConfig {
  std::pair<double, double> distance_range{4.5, 5.5};
  std::pair<double, double> azimuth_deg{-45.0, 45.0};
  std::pair<double, double> altitude_deg{30.0, 60.0};

  void validate() const {
    if (distance_range.first > distance_range.second || azimuth_deg.first > azimuth_deg.second ||
        altitude_deg.first > altitude_deg.second)
      throw Error(ErrorCode::invalid_argument, "camera sampling range has min > max");
  }
};

inline Vec3 spherical_position(const Vec3& target, double distance, double azimuth_deg, double altitude_deg) {
  const double az = deg_to_rad(azimuth_deg);
  const double alt = deg_to_rad(altitude_deg);
  return target + distance * Vec3(std::cos(alt) * std::cos(az), std::cos(alt) * std::sin(az), std::sin(alt));
}

inline CameraExtrinsics sample_camera_pose(Rng& rng, const CameraSamplingConfig& config, const Vec3& target) {
  config.validate();
  const double d = rng.uniform(config.distance_range.first, config.distance_range.second);
  const double az = rng.uniform(config.azimuth_deg.first, config.azimuth_deg.second);
  const double alt = rng.uniform(config.altitude_deg.first, config.altitude_deg.second);
  return look_at(spherical_position(target, d, az, alt), target);
}

}  // namespace crayon
