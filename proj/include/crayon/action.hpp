#pragma once

#include "crayon/core.hpp"

#include <optional>
#include <string_view>

namespace crayon {

/// Gripper frame from an approach (z) and closing (y) axis: z = normalize(Z),
/// y = Gram-Schmidt of Y against z, x = y cross z; columns (x, y, z).
inline Mat3 rotation_from_zy(const Vec3& z_in, const Vec3& y_in) {
  if (!(z_in.norm() > 1e-9) || !(y_in.norm() > 1e-9))
    throw Error(ErrorCode::invalid_argument, "rotation axes must be non-zero");
  const Vec3 z = z_in.normalized();
  const Vec3 y0 = y_in.normalized();
  if (std::abs(z.dot(y0)) >= 0.99) throw Error(ErrorCode::degenerate, "z and y axes are nearly parallel");
  const Vec3 y = (y0 - y0.dot(z) * z).normalized();
  const Vec3 x = y.cross(z);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

/// Minimal pose description consumed by the executor.
struct ContactAction {
  Vec3 contact = Vec3::Zero();
  Vec3 z_axis = Vec3::UnitZ();
  Vec3 y_axis = Vec3::UnitY();
  std::optional<Vec3> move_dir;
};

/// Successful contact pose recorded in simulation.
struct GroundTruthAction {
  Vec3 contact_point = Vec3::Zero();
  Vec3 z_axis = Vec3::UnitZ();
  Vec3 y_axis = Vec3::UnitY();
  std::optional<Vec3> move_dir;
  int part_id = 0;

  ContactAction contact_action() const { return {contact_point, z_axis, y_axis, move_dir}; }
};

enum class Provenance { solver, toy_model, ground_truth };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::solver: return "solver";
    case Provenance::toy_model: return "toy_model";
    case Provenance::ground_truth: return "ground_truth";
  }
  return "unknown";
}

struct PredictedAction {
  Vec2 contact_px_pred = Vec2::Zero();
  Vec3 contact_3d = Vec3::Zero();
  Vec3 z_axis = Vec3::UnitZ();
  Vec3 y_axis = Vec3::UnitY();
  std::optional<Vec3> move_dir;
  /// Set when move_dir was filled by the retreat prior instead of a prompt.
  bool move_from_prior = false;
  Provenance provenance = Provenance::solver;

  ContactAction contact_action() const { return {contact_3d, z_axis, y_axis, move_dir}; }
};

}  // namespace crayon
