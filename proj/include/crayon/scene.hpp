#pragma once

#include "crayon/action.hpp"
#include "crayon/camera.hpp"
#include "crayon/core.hpp"
#include "crayon/image.hpp"
#include "crayon/rng.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crayon {

enum class SceneKind { drawer, door, lid, button, lever };

inline constexpr std::array<SceneKind, 5> kAllSceneKinds = {SceneKind::drawer, SceneKind::door, SceneKind::lid,
                                                             SceneKind::button, SceneKind::lever};

inline std::string_view to_string(SceneKind k) {
  switch (k) {
    case SceneKind::drawer: return "drawer";
    case SceneKind::door: return "door";
    case SceneKind::lid: return "lid";
    case SceneKind::button: return "button";
    case SceneKind::lever: return "lever";
  }
  return "unknown";
}

inline SceneKind scene_kind_from_string(std::string_view s) {
  for (auto k : kAllSceneKinds)
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::invalid_argument, "unknown scene kind '" + std::string(s) + "'");
}

enum class JointKind { prismatic, revolute };

struct Joint {
  JointKind kind = JointKind::prismatic;
  Vec3 axis = Vec3::UnitX();
  Vec3 pivot = Vec3::Zero();  // revolute only
  double lower = 0.0;
  double upper = 1.0;
  double state = 0.0;

  double range() const { return upper - lower; }
};

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  Vec3 apply(const Vec3& local) const { return rotation * local + position; }
  Vec3 inverse_apply(const Vec3& world) const { return rotation.transpose() * (world - position); }
};

/// Box with its own orientation; `rotation` maps box-local axes to world.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  Mat3 rotation = Mat3::Identity();
};

struct Triangle {
  std::array<Vec3, 3> v;
};

/// Graspable patch on one face of the movable part, in part-local coordinates.
struct GraspRegion {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  Vec3 face_normal_local = Vec3::UnitX();
  /// Long edge of the handle; the ground-truth gripper y-axis follows it.
  Vec3 edge_local = Vec3::UnitY();
};

/// Body ids used by ray hits and label rasters.
inline constexpr int kNoBody = -1;
inline constexpr int kPartBody = 0;

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  int body = kNoBody;
  Vec3 normal = Vec3::Zero();

  bool hit() const { return body != kNoBody; }
};

namespace detail {

/// Slab test. A ray starting inside the box reports t = 0.
inline std::optional<std::pair<double, Vec3>> intersect_box(const Vec3& origin, const Vec3& dir, const Box& box) {
  const Vec3 o = box.rotation.transpose() * (origin - box.center);
  const Vec3 d = box.rotation.transpose() * dir;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = -1;
  double near_sign = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double h = box.half_extents(a);
    if (std::abs(d(a)) < 1e-15) {
      if (o(a) < -h || o(a) > h) return std::nullopt;
      continue;
    }
    double t1 = (-h - o(a)) / d(a);
    double t2 = (h - o(a)) / d(a);
    double sign = -1.0;
    if (t1 > t2) {
      std::swap(t1, t2);
      sign = 1.0;
    }
    if (t1 > t_near) {
      t_near = t1;
      near_axis = a;
      near_sign = sign;
    }
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_far < 0.0) return std::nullopt;
  if (t_near < 0.0 || near_axis < 0) return std::make_pair(0.0, Vec3(-dir.normalized()));
  Vec3 n_local = Vec3::Zero();
  n_local(near_axis) = near_sign;
  return std::make_pair(t_near, Vec3(box.rotation * n_local));
}

inline Vec3 box_corner(const Box& b, int i) {
  const Vec3 s((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
  return b.center + b.rotation * s.cwiseProduct(b.half_extents);
}

}  // namespace detail

/// Procedural articulated object: static base boxes plus one movable box
/// attached through a single joint.
struct Scene {
  SceneKind kind = SceneKind::drawer;
  std::uint64_t seed = 0;
  std::vector<Box> base;
  Vec3 part_half_extents = Vec3::Ones();
  /// Part frame at joint state 0.
  Pose part_rest;
  Joint joint;
  GraspRegion grasp;

  Pose part_pose() const { return part_pose_at(joint.state); }

  Pose part_pose_at(double state) const {
    if (joint.kind == JointKind::prismatic) return {part_rest.rotation, part_rest.position + state * joint.axis};
    const Mat3 rq = Eigen::AngleAxisd(state, joint.axis).toRotationMatrix();
    return {rq * part_rest.rotation, joint.pivot + rq * (part_rest.position - joint.pivot)};
  }

  Box part_box() const {
    const Pose p = part_pose();
    return {p.position, part_half_extents, p.rotation};
  }

  void set_state(double q) { joint.state = std::clamp(q, joint.lower, joint.upper); }

  /// Unit direction a point rigidly attached to the part moves under positive
  /// joint velocity, and the Cartesian speed per unit joint velocity there.
  std::pair<Vec3, double> free_direction(const Vec3& world_point) const {
    if (joint.kind == JointKind::prismatic) return {joint.axis, 1.0};
    const Vec3 v = joint.axis.cross(world_point - joint.pivot);
    const double gain = v.norm();
    if (gain < 1e-9) return {Vec3::Zero(), 0.0};
    return {v / gain, gain};
  }

  Vec3 target() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& b : base) {
      for (int i = 0; i < 8; ++i) {
        const Vec3 c = detail::box_corner(b, i);
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
      }
    }
    return 0.5 * (lo + hi);
  }

  RayHit cast(const Vec3& origin, const Vec3& dir) const {
    RayHit best;
    const auto consider = [&](const Box& b, int id) {
      if (auto h = detail::intersect_box(origin, dir, b); h && h->first < best.t) {
        best.t = h->first;
        best.body = id;
        best.normal = h->second;
      }
    };
    consider(part_box(), kPartBody);
    for (std::size_t i = 0; i < base.size(); ++i) consider(base[i], static_cast<int>(i) + 1);
    return best;
  }

  /// Triangulated surface of the movable part at the current state.
  std::vector<Triangle> part_mesh() const {
    const Box b = part_box();
    static constexpr int faces[6][4] = {{0, 2, 6, 4}, {1, 5, 7, 3}, {0, 4, 5, 1},
                                        {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 6, 7, 5}};
    std::vector<Triangle> tris;
    for (const auto& f : faces) {
      const Vec3 a = detail::box_corner(b, f[0]), c1 = detail::box_corner(b, f[1]), c2 = detail::box_corner(b, f[2]),
                 c3 = detail::box_corner(b, f[3]);
      tris.push_back({{a, c1, c2}});
      tris.push_back({{a, c2, c3}});
    }
    return tris;
  }
};

namespace detail {

inline Box aligned(const Vec3& center, const Vec3& half) { return {center, half, Mat3::Identity()}; }

}  // namespace detail

/// Deterministic scene for (kind, seed). Every part faces +x (toward cameras
/// at zero azimuth); positive joint velocity opens, pulls, or presses.
inline Scene build_scene(SceneKind kind, std::uint64_t seed) {
  Rng rng(seed ^ (0x5eedull << 32) ^ static_cast<std::uint64_t>(kind));
  Scene s;
  s.kind = kind;
  s.seed = seed;
  const double k = rng.uniform(0.9, 1.1);
  using detail::aligned;
  switch (kind) {
    case SceneKind::drawer: {
      const Vec3 cab(0.35 * k, 0.45 * k, 0.45 * k);
      s.base.push_back(aligned({0, 0, cab.z()}, cab));
      const double hw = rng.uniform(0.25, 0.34) * k;
      const double hh = rng.uniform(0.08, 0.13) * k;
      const double zc = rng.uniform(0.35, 0.6) * 2.0 * cab.z() / 0.9;
      s.part_half_extents = {0.2 * k, hw, hh};
      s.part_rest.position = {cab.x() - 0.2 * k + 0.03, 0.0, std::min(zc, 2.0 * cab.z() - hh - 0.05)};
      s.joint = {JointKind::prismatic, Vec3::UnitX(), Vec3::Zero(), 0.0, 0.4 * k, 0.0};
      s.grasp = {{0.2 * k, -0.6 * hw, -0.45 * hh}, {0.2 * k, 0.6 * hw, 0.45 * hh}, Vec3::UnitX(), Vec3::UnitY()};
      break;
    }
    case SceneKind::door: {
      const Vec3 cab(0.3 * k, 0.4 * k, 0.45 * k);
      s.base.push_back(aligned({0, 0, cab.z()}, cab));
      const double t = 0.02 * k;
      s.part_half_extents = {t, cab.y(), cab.z() - 0.03};
      s.part_rest.position = {cab.x() + t, 0.0, cab.z()};
      s.joint = {JointKind::revolute, -Vec3::UnitZ(), Vec3(cab.x(), -cab.y(), cab.z()), 0.0, kPi / 2.0, 0.0};
      s.grasp = {{t, cab.y() - 0.2 * k, -0.15 * k}, {t, cab.y() - 0.07 * k, 0.15 * k}, Vec3::UnitX(), Vec3::UnitZ()};
      break;
    }
    case SceneKind::lid: {
      const Vec3 body(0.3 * k, 0.35 * k, 0.3 * k);
      s.base.push_back(aligned({0, 0, body.z()}, body));
      const double t = 0.025 * k;
      s.part_half_extents = {body.x() + 0.01, body.y() + 0.01, t};
      s.part_rest.position = {0.0, 0.0, 2.0 * body.z() + t};
      s.joint = {JointKind::revolute, -Vec3::UnitY(), Vec3(-body.x() - 0.01, 0.0, 2.0 * body.z()), 0.0, kPi / 2.0,
                 0.0};
      s.grasp = {{body.x() - 0.16 * k, -0.2 * k, t}, {body.x() - 0.04 * k, 0.2 * k, t}, Vec3::UnitZ(), Vec3::UnitY()};
      break;
    }
    case SceneKind::button: {
      const Vec3 body(0.2 * k, 0.3 * k, 0.4 * k);
      s.base.push_back(aligned({0, 0, body.z()}, body));
      const Vec3 half(0.04 * k, 0.07 * k, 0.07 * k);
      s.part_half_extents = half;
      s.part_rest.position = {body.x() + half.x(), rng.uniform(-0.1, 0.1) * k, body.z() + rng.uniform(0.0, 0.15) * k};
      s.joint = {JointKind::prismatic, -Vec3::UnitX(), Vec3::Zero(), 0.0, 0.06 * k, 0.0};
      s.grasp = {{half.x(), -0.045 * k, -0.045 * k}, {half.x(), 0.045 * k, 0.045 * k}, Vec3::UnitX(), Vec3::UnitZ()};
      break;
    }
    case SceneKind::lever: {
      const Vec3 body(0.15 * k, 0.35 * k, 0.4 * k);
      s.base.push_back(aligned({0, 0, body.z()}, body));
      const Vec3 half(0.03 * k, 0.22 * k, 0.05 * k);
      const Vec3 pivot(body.x(), 0.0, body.z() + 0.05 * k);
      s.part_half_extents = half;
      s.part_rest.position = pivot + Vec3(half.x(), 0.18 * k, 0.0);
      s.joint = {JointKind::revolute, Vec3::UnitX(), pivot, 0.0, kPi / 2.0, 0.0};
      s.grasp = {{half.x(), 0.07 * k, -0.02 * k}, {half.x(), 0.18 * k, 0.02 * k}, Vec3::UnitX(), Vec3::UnitY()};
      break;
    }
  }
  // Start anywhere from fully closed up to half open.
  s.joint.state = s.joint.lower + rng.uniform(0.0, 0.5) * s.joint.range();
  return s;
}

// --- rendering ------------------------------------------------------------

struct RenderResult {
  RgbImage rgb;
  DepthImage depth;
  /// Body id per pixel (kNoBody for background).
  std::vector<int> labels;

  int label(int x, int y) const { return labels[static_cast<std::size_t>(y) * rgb.width + x]; }
};

inline constexpr Rgb kBackgroundColor{236, 236, 240};
inline constexpr Rgb kBaseColor{176, 150, 118};
inline constexpr Rgb kPartColor{112, 132, 164};

/// Flat-shaded ray cast with exact per-pixel depth.
inline RenderResult render(const Scene& scene, const CameraIntrinsics& k, const CameraExtrinsics& e) {
  k.validate();
  RenderResult out{RgbImage(k.width, k.height, kBackgroundColor), DepthImage(k.width, k.height),
                   std::vector<int>(static_cast<std::size_t>(k.width * k.height), kNoBody)};
  std::vector<Box> boxes{scene.part_box()};
  boxes.insert(boxes.end(), scene.base.begin(), scene.base.end());
  double x0 = k.width, y0 = k.height, x1 = -1, y1 = -1;
  for (const auto& b : boxes) {
    for (int i = 0; i < 8; ++i) {
      const Vec2 p = project(detail::box_corner(b, i), k, e);
      x0 = std::min(x0, p.x());
      y0 = std::min(y0, p.y());
      x1 = std::max(x1, p.x());
      y1 = std::max(y1, p.y());
    }
  }
  const int ix0 = std::max(0, static_cast<int>(std::floor(x0)) - 1);
  const int iy0 = std::max(0, static_cast<int>(std::floor(y0)) - 1);
  const int ix1 = std::min(k.width - 1, static_cast<int>(std::ceil(x1)) + 1);
  const int iy1 = std::min(k.height - 1, static_cast<int>(std::ceil(y1)) + 1);
  const Vec3 eye = e.center();
  const Vec3 light = Vec3(0.4, 0.3, 0.86).normalized();
  const Vec3 forward = e.forward();
  for (int y = iy0; y <= iy1; ++y) {
    for (int x = ix0; x <= ix1; ++x) {
      const Vec3 ray = pixel_ray(Vec2(x, y), k, e);
      const RayHit hit = scene.cast(eye, ray);
      if (!hit.hit()) continue;
      const double z = hit.t * ray.dot(forward);
      out.depth.set(x, y, z);
      out.labels[static_cast<std::size_t>(y) * k.width + x] = hit.body;
      const Rgb base = hit.body == kPartBody ? kPartColor : kBaseColor;
      const double shade = 0.45 + 0.55 * std::abs(hit.normal.dot(light));
      out.rgb.set(x, y,
                  {static_cast<std::uint8_t>(base[0] * shade), static_cast<std::uint8_t>(base[1] * shade),
                   static_cast<std::uint8_t>(base[2] * shade)});
    }
  }
  return out;
}

// --- execution ------------------------------------------------------------

enum class Aperture { open, closed };

struct GripperState {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();
  Aperture aperture = Aperture::open;
  /// Contact anchor in part-local coordinates while attached.
  std::optional<Vec3> attached;
};

enum class FailureReason { no_contact, slip, collision, no_motion };

inline std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::no_contact: return "no_contact";
    case FailureReason::slip: return "slip";
    case FailureReason::collision: return "collision";
    case FailureReason::no_motion: return "no_motion";
  }
  return "unknown";
}

/// Which way the task wants the joint to go; open follows positive joint velocity.
enum class MotionSense { open = 1, close = -1 };

inline std::string_view to_string(MotionSense s) { return s == MotionSense::open ? "open" : "close"; }

inline MotionSense motion_sense_from_string(std::string_view s) {
  if (s == "open") return MotionSense::open;
  if (s == "close") return MotionSense::close;
  throw Error(ErrorCode::invalid_argument, "unknown motion sense: " + std::string(s));
}

struct ExecutionResult {
  bool success = false;
  /// Joint change as a fraction of the joint range, signed by the requested
  /// sense when one is given and absolute otherwise.
  double part_displacement = 0.0;
  bool contact_established = false;
  std::vector<GripperState> trajectory;
  std::optional<FailureReason> failure_reason;
};

struct ExecutionParams {
  double pre_distance = 0.15;
  double grasp_tolerance = 0.05;
  double grasp_angle_deg = 60.0;
  /// A step slips when its component off the free direction exceeds this
  /// fraction of its length.
  double slip_fraction = 0.5;
  int move_steps = 10;
  /// Commanded travel as a fraction of the joint range, mapped to Cartesian at the anchor.
  double move_fraction = 0.5;
  double success_threshold = 0.10;
  bool move_after_contact = true;
  /// When set, motion against this sense does not count.
  std::optional<MotionSense> sense;
};

namespace detail {

struct ContactOutcome {
  std::optional<FailureReason> failure;
  Vec3 anchor_local = Vec3::Zero();
  Vec3 contact_world = Vec3::Zero();
};

inline void validate_action(const ContactAction& a) {
  const auto bad = [](const Vec3& v) { return !v.allFinite() || !(v.norm() > 1e-9); };
  if (!a.contact.allFinite() || bad(a.z_axis) || bad(a.y_axis) || (a.move_dir && bad(*a.move_dir)))
    throw Error(ErrorCode::malformed_action, "action has zero or non-finite vectors");
  if (std::abs(a.z_axis.normalized().dot(a.y_axis.normalized())) >= 0.99)
    throw Error(ErrorCode::malformed_action, "z and y axes are nearly parallel");
}

/// Pre-move waypoint, straight approach along gripper +z, attach test.
inline ContactOutcome approach(const Scene& scene, const Mat3& rot, const ContactAction& a, const ExecutionParams& p,
                               std::vector<GripperState>& traj) {
  const Vec3 z = rot.col(2);
  const Vec3 pre = a.contact - p.pre_distance * z;
  traj.push_back({rot, pre, Aperture::open, std::nullopt});
  const RayHit hit = scene.cast(pre, z);
  ContactOutcome out;
  if (!hit.hit() || hit.t > p.pre_distance + p.grasp_tolerance) {
    out.failure = FailureReason::no_contact;
    traj.push_back({rot, a.contact, Aperture::open, std::nullopt});
    return out;
  }
  const Vec3 tip = pre + hit.t * z;
  traj.push_back({rot, tip, Aperture::closed, std::nullopt});
  if (hit.t < p.pre_distance - p.grasp_tolerance) {
    out.failure = FailureReason::collision;
    return out;
  }
  if (hit.body != kPartBody) {
    out.failure = FailureReason::no_motion;
    return out;
  }
  if (angle_deg(z, -hit.normal) > p.grasp_angle_deg) {
    out.failure = FailureReason::no_contact;
    return out;
  }
  out.contact_world = tip;
  out.anchor_local = scene.part_pose().inverse_apply(tip);
  traj.back().attached = out.anchor_local;
  return out;
}

inline void finish(ExecutionResult& r, const Scene& scene, double q0, bool slipped, const ExecutionParams& p) {
  const double dq = (scene.joint.state - q0) / scene.joint.range();
  r.part_displacement = p.sense ? static_cast<double>(static_cast<int>(*p.sense)) * dq : std::abs(dq);
  r.success = r.part_displacement >= p.success_threshold;
  if (!r.success && !r.failure_reason) r.failure_reason = slipped ? FailureReason::slip : FailureReason::no_motion;
}

}  // namespace detail

/// Quasi-static execution: approach, attach, then translate along the move
/// direction with each step projected onto the joint's free direction at the
/// anchor. Mutates the scene's joint state.
inline ExecutionResult execute(Scene& scene, const ContactAction& action, const ExecutionParams& params = {}) {
  detail::validate_action(action);
  const Mat3 rot = rotation_from_zy(action.z_axis, action.y_axis);
  ExecutionResult r;
  const double q0 = scene.joint.state;
  auto contact = detail::approach(scene, rot, action, params, r.trajectory);
  if (contact.failure) {
    r.failure_reason = contact.failure;
    r.contact_established = false;
    return r;
  }
  r.contact_established = true;
  bool slipped = false;
  if (params.move_after_contact && action.move_dir) {
    const Vec3 m = action.move_dir->normalized();
    const Vec3 anchor0 = scene.part_pose().apply(contact.anchor_local);
    const double gain0 = scene.free_direction(anchor0).second;
    const double travel = params.move_fraction * scene.joint.range() * gain0;
    const double step_len = params.move_steps > 0 ? travel / params.move_steps : 0.0;
    for (int i = 0; i < params.move_steps && step_len > 0.0; ++i) {
      const Vec3 anchor = scene.part_pose().apply(contact.anchor_local);
      const auto [f, gain] = scene.free_direction(anchor);
      const Vec3 delta = step_len * m;
      const double along = delta.dot(f);
      const double lateral = (delta - along * f).norm();
      if (gain <= 0.0 || lateral > params.slip_fraction * step_len) {
        slipped = true;
        break;
      }
      scene.set_state(scene.joint.state + along / gain);
      const Vec3 moved = scene.part_pose().apply(contact.anchor_local);
      r.trajectory.push_back({rot, moved, Aperture::closed, contact.anchor_local});
    }
  }
  detail::finish(r, scene, q0, slipped, params);
  if (slipped && r.success) r.trajectory.back().attached.reset();
  return r;
}

/// In-place wrist rotation about the gripper z-axis after contact; the part
/// turns by the component of the wrist rotation about its joint axis.
inline ExecutionResult execute_rotation(Scene& scene, const ContactAction& action, double wrist_angle,
                                        const ExecutionParams& params = {}) {
  detail::validate_action(action);
  Mat3 rot = rotation_from_zy(action.z_axis, action.y_axis);
  ExecutionResult r;
  const double q0 = scene.joint.state;
  auto contact = detail::approach(scene, rot, action, params, r.trajectory);
  if (contact.failure) {
    r.failure_reason = contact.failure;
    return r;
  }
  r.contact_established = true;
  bool slipped = false;
  const Vec3 z = rot.col(2);
  const int steps = std::max(1, params.move_steps);
  const double cos_slip = std::sqrt(std::max(0.0, 1.0 - params.slip_fraction * params.slip_fraction));
  for (int i = 0; i < steps; ++i) {
    const double d_angle = wrist_angle / steps;
    const double c = scene.joint.kind == JointKind::revolute ? z.dot(scene.joint.axis) : 0.0;
    if (std::abs(c) < cos_slip) {
      slipped = true;
      break;
    }
    scene.set_state(scene.joint.state + d_angle * c);
    rot = Eigen::AngleAxisd(d_angle, z).toRotationMatrix() * rot;
    r.trajectory.push_back({rot, contact.contact_world, Aperture::closed, contact.anchor_local});
  }
  detail::finish(r, scene, q0, slipped, params);
  return r;
}

// --- ground truth ---------------------------------------------------------

/// Rejection-sampled successful contact pose on the graspable region.
inline GroundTruthAction collect_ground_truth(const Scene& scene, const CameraIntrinsics& k, const CameraExtrinsics& e,
                                              Rng& rng, MotionSense sense = MotionSense::open,
                                              const ExecutionParams& params = {}, int max_attempts = 100) {
  const Pose pose = scene.part_pose();
  const Vec3 eye = e.center();
  const Vec3 normal = (pose.rotation * scene.grasp.face_normal_local).normalized();
  Vec3 y = (pose.rotation * scene.grasp.edge_local).normalized();
  if (std::abs(y.z()) > 1e-6 ? y.z() < 0.0 : (std::abs(y.y()) > 1e-6 ? y.y() < 0.0 : y.x() < 0.0)) y = -y;
  const double margin = 8.0;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Vec3 local;
    for (int a = 0; a < 3; ++a) local(a) = rng.uniform(scene.grasp.lo(a), scene.grasp.hi(a));
    const Vec3 p = pose.apply(local);
    const Vec3 to_eye = eye - p;
    if (normal.dot(to_eye.normalized()) < 0.15) continue;
    if (!(e.to_camera(p).z() > 0.0)) continue;
    const Vec2 px = project(p, k, e);
    if (px.x() < margin || px.y() < margin || px.x() > k.width - 1 - margin || px.y() > k.height - 1 - margin)
      continue;
    const RayHit vis = scene.cast(eye, -to_eye.normalized());
    if (vis.body != kPartBody || std::abs(vis.t - to_eye.norm()) > 1e-6) continue;
    const auto [f, gain] = scene.free_direction(p);
    if (gain <= 0.0) continue;
    GroundTruthAction gt{p, -normal, y, Vec3(static_cast<double>(static_cast<int>(sense)) * f), kPartBody};
    Scene trial = scene;
    ExecutionParams verify = params;
    verify.sense = sense;
    if (execute(trial, gt.contact_action(), verify).success) return gt;
  }
  throw Error(ErrorCode::no_graspable_region, "no successful contact found on the graspable region");
}

}  // namespace crayon
