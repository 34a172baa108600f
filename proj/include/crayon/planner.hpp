#pragma once

#include "crayon/action.hpp"
#include "crayon/core.hpp"
#include "crayon/predictor.hpp"
#include "crayon/prompt.hpp"
#include "crayon/records.hpp"
#include "crayon/scene.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace crayon {

enum class PrimitiveKind { pick, place, push, pull, move, rotate };

inline constexpr std::array<PrimitiveKind, 6> kAllPrimitives = {PrimitiveKind::pick, PrimitiveKind::place,
                                                                PrimitiveKind::push, PrimitiveKind::pull,
                                                                PrimitiveKind::move, PrimitiveKind::rotate};

inline std::string_view to_string(PrimitiveKind p) {
  switch (p) {
    case PrimitiveKind::pick: return "pick";
    case PrimitiveKind::place: return "place";
    case PrimitiveKind::push: return "push";
    case PrimitiveKind::pull: return "pull";
    case PrimitiveKind::move: return "move";
    case PrimitiveKind::rotate: return "rotate";
  }
  return "unknown";
}

inline PrimitiveKind primitive_from_string(std::string_view s) {
  for (auto p : kAllPrimitives)
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::invalid_argument, "unknown primitive: " + std::string(s));
}

inline bool requires_move_prompt(PrimitiveKind p) {
  return p == PrimitiveKind::pick || p == PrimitiveKind::push || p == PrimitiveKind::pull;
}

enum class Phase { pre_move, contact, post_move };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::pre_move: return "pre_move";
    case Phase::contact: return "contact";
    case Phase::post_move: return "post_move";
  }
  return "unknown";
}

struct Waypoint {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();
  Aperture aperture = Aperture::open;
  Phase phase = Phase::pre_move;
};

inline Json to_json(const Waypoint& w) {
  return {{"rotation", to_json(w.rotation)},
          {"position", to_json(w.position)},
          {"aperture", w.aperture == Aperture::open ? "open" : "closed"},
          {"phase", std::string(to_string(w.phase))}};
}

struct PlannerParams {
  double pre_distance = 0.15;
  int post_steps = 10;
  /// Post-contact travel as a fraction of the joint range, mapped to Cartesian at the anchor.
  double move_fraction = 0.5;
  double rotate_contact_tol = 0.02;
  double rotate_axis_tol_deg = 5.0;
  int rotate_steps = 10;
};

/// Cartesian post-contact travel for a contact on `scene`'s movable part.
inline double move_distance(const Scene& scene, const Vec3& contact, const PlannerParams& p = {}) {
  return p.move_fraction * scene.joint.range() * scene.free_direction(contact).second;
}

/// Aperture before and after contact for each primitive.
inline std::pair<Aperture, Aperture> aperture_schedule(PrimitiveKind p) {
  switch (p) {
    case PrimitiveKind::pick:
    case PrimitiveKind::pull: return {Aperture::open, Aperture::closed};
    case PrimitiveKind::place: return {Aperture::closed, Aperture::open};
    case PrimitiveKind::push: return {Aperture::closed, Aperture::closed};
    case PrimitiveKind::move:
    case PrimitiveKind::rotate: return {Aperture::open, Aperture::open};
  }
  return {Aperture::open, Aperture::open};
}

/// Pre-move, contact, then `post_steps` waypoints along M covering `d_move`.
inline std::vector<Waypoint> plan_step(const PredictedAction& a, PrimitiveKind primitive, double d_move,
                                       const PlannerParams& p = {}) {
  if (primitive == PrimitiveKind::rotate) throw Error(ErrorCode::invalid_argument, "rotate steps use plan_rotate");
  const bool moves = requires_move_prompt(primitive);
  if (moves && !a.move_dir)
    throw Error(ErrorCode::invalid_argument, std::string(to_string(primitive)) + " needs a moving direction");
  const Mat3 rot = rotation_from_zy(a.z_axis, a.y_axis);
  const Vec3 z = rot.col(2);
  const auto [before, after] = aperture_schedule(primitive);
  std::vector<Waypoint> out;
  out.push_back({rot, a.contact_3d - p.pre_distance * z, before, Phase::pre_move});
  out.push_back({rot, a.contact_3d, after, Phase::contact});
  if (moves) {
    const Vec3 m = a.move_dir->normalized();
    for (int i = 1; i <= p.post_steps; ++i)
      out.push_back({rot, a.contact_3d + (d_move * i / p.post_steps) * m, after, Phase::post_move});
  }
  return out;
}

struct RotatePlan {
  std::vector<Waypoint> approach;
  /// Signed wrist angle about the shared z-axis, radians.
  double angle = 0.0;
  /// Cumulative wrist angle after each interpolation step.
  std::vector<double> wrist_angles;
};

/// Wrist rotation that takes the contact pose of `a` to that of `b` in place.
inline RotatePlan plan_rotate(const PredictedAction& a, const PredictedAction& b, const PlannerParams& p = {}) {
  if ((a.contact_3d - b.contact_3d).norm() > p.rotate_contact_tol)
    throw Error(ErrorCode::invalid_argument, "rotate key-frames imply a translation");
  const Mat3 ra = rotation_from_zy(a.z_axis, a.y_axis);
  const Mat3 rb = rotation_from_zy(b.z_axis, b.y_axis);
  const Vec3 za = ra.col(2);
  if (angle_deg(za, rb.col(2)) > p.rotate_axis_tol_deg)
    throw Error(ErrorCode::invalid_argument, "rotate key-frames disagree on the gripper z-axis");
  RotatePlan plan;
  const Vec3 ya = ra.col(1), yb = rb.col(1);
  plan.angle = std::atan2(ya.cross(yb).dot(za), ya.dot(yb));
  const auto [before, after] = aperture_schedule(PrimitiveKind::rotate);
  plan.approach.push_back({ra, a.contact_3d - p.pre_distance * za, before, Phase::pre_move});
  plan.approach.push_back({ra, a.contact_3d, after, Phase::contact});
  for (int i = 1; i <= p.rotate_steps; ++i) plan.wrist_angles.push_back(plan.angle * i / p.rotate_steps);
  return plan;
}

// --- key-frame plans --------------------------------------------------------------

struct KeyFrame {
  CrayonPrompt prompt;
  PrimitiveKind primitive = PrimitiveKind::pull;
  /// Direction the task wants the joint to go.
  MotionSense sense = MotionSense::open;
};

struct KeyFramePlan {
  std::vector<KeyFrame> steps;

  void validate() const {
    if (steps.empty()) throw Error(ErrorCode::invalid_argument, "plan has no key-frames");
    for (std::size_t i = 0; i < steps.size();) {
      if (steps[i].primitive == PrimitiveKind::rotate) {
        if (i + 1 >= steps.size() || steps[i + 1].primitive != PrimitiveKind::rotate)
          throw Error(ErrorCode::invalid_argument, "rotate key-frames must come in consecutive pairs");
        i += 2;
      } else {
        ++i;
      }
    }
  }
};

struct StepResult {
  std::size_t step = 0;
  PrimitiveKind primitive = PrimitiveKind::pull;
  CrayonPrompt prompt;
  PredictedAction action;
  std::vector<Waypoint> waypoints;
  ExecutionResult execution;
  bool success = false;
};

struct PlanResult {
  std::vector<StepResult> steps;
  bool success = false;
  /// Index of the failed step that stopped the plan, if any.
  std::optional<std::size_t> aborted_at;
};

/// Supplies the prompt of step `i` from the scene as it stands before that step.
using PromptRefresher = std::function<CrayonPrompt(const Scene&, std::size_t)>;

struct PlanContext {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
  ExecutionParams execution;
  PlannerParams planner;
  /// Lets the solver resolve M within its family using the scene's joint.
  bool attach_scene_hint = true;
  PromptRefresher refresh;
};

inline MotionHint scene_motion_hint(const Scene& scene) {
  return [&scene](const Vec3& p) -> std::optional<Vec3> {
    const auto [f, gain] = scene.free_direction(p);
    if (gain <= 0.0) return std::nullopt;
    return f;
  };
}

namespace detail {

inline PredictedAction predict_step(const Scene& scene, const Predictor& predictor, const CrayonPrompt& prompt,
                                    const PlanContext& ctx, std::size_t index) {
  const RenderResult frame = render(scene, ctx.intrinsics, ctx.extrinsics);
  Observation obs{ctx.intrinsics, ctx.extrinsics, &frame.depth, {}};
  if (ctx.attach_scene_hint) obs.motion_hint = scene_motion_hint(scene);
  try {
    return predictor.predict(prompt, obs);
  } catch (const Error& e) {
    throw Error(e.code(), "step " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace detail

/// Predicts, plans and executes each key-frame in order; stops at the first
/// failed step. Overall success is the conjunction of step successes.
inline PlanResult execute_plan(Scene& scene, const KeyFramePlan& plan, const Predictor& predictor,
                               const PlanContext& ctx) {
  plan.validate();
  PlanResult out;
  for (std::size_t i = 0; i < plan.steps.size();) {
    const KeyFrame& kf = plan.steps[i];
    StepResult r;
    r.step = i;
    r.primitive = kf.primitive;
    r.prompt = ctx.refresh ? ctx.refresh(scene, i) : kf.prompt;
    ExecutionParams ep = ctx.execution;
    ep.sense = kf.sense;
    ep.pre_distance = ctx.planner.pre_distance;
    ep.move_fraction = ctx.planner.move_fraction;
    ep.move_steps = ctx.planner.post_steps;
    std::size_t consumed = 1;
    if (kf.primitive == PrimitiveKind::rotate) {
      const CrayonPrompt second = ctx.refresh ? ctx.refresh(scene, i + 1) : plan.steps[i + 1].prompt;
      r.action = detail::predict_step(scene, predictor, r.prompt, ctx, i);
      const PredictedAction b = detail::predict_step(scene, predictor, second, ctx, i + 1);
      RotatePlan rp;
      try {
        rp = plan_rotate(r.action, b, ctx.planner);
      } catch (const Error& e) {
        throw Error(e.code(), "step " + std::to_string(i) + ": " + e.what());
      }
      r.waypoints = rp.approach;
      r.execution = execute_rotation(scene, r.action.contact_action(), rp.angle, ep);
      r.success = r.execution.success;
      consumed = 2;
    } else {
      r.action = detail::predict_step(scene, predictor, r.prompt, ctx, i);
      const bool moves = requires_move_prompt(kf.primitive);
      if (moves && !r.action.move_dir)
        throw Error(ErrorCode::invalid_state, "step " + std::to_string(i) + ": prediction has no moving direction");
      r.waypoints = plan_step(r.action, kf.primitive, move_distance(scene, r.action.contact_3d, ctx.planner),
                              ctx.planner);
      ep.move_after_contact = moves;
      r.execution = execute(scene, r.action.contact_action(), ep);
      r.success = moves ? r.execution.success : r.execution.contact_established;
    }
    out.steps.push_back(std::move(r));
    if (!out.steps.back().success) {
      out.aborted_at = i;
      break;
    }
    i += consumed;
  }
  out.success = !out.aborted_at.has_value();
  for (const auto& s : out.steps) out.success = out.success && s.success;
  return out;
}

inline Json to_json(const StepResult& r) {
  Json wps = Json::array();
  for (const auto& w : r.waypoints) wps.push_back(to_json(w));
  return {{"step", r.step},
          {"primitive", std::string(to_string(r.primitive))},
          {"prompt", to_json(r.prompt)},
          {"action", to_json(r.action)},
          {"waypoints", wps},
          {"execution", to_json(r.execution)},
          {"success", r.success}};
}

inline Json to_json(const KeyFramePlan& plan) {
  Json steps = Json::array();
  for (const auto& s : plan.steps)
    steps.push_back({{"prompt", to_json(s.prompt)},
                     {"primitive", std::string(to_string(s.primitive))},
                     {"sense", std::string(to_string(s.sense))}});
  return {{"steps", steps}};
}

inline KeyFramePlan key_frame_plan_from_json(const Json& j) {
  KeyFramePlan plan;
  for (const auto& s : detail::field(j, "steps")) {
    KeyFrame kf;
    kf.prompt = prompt_from_json(detail::field(s, "prompt"));
    kf.primitive = primitive_from_string(detail::field(s, "primitive").get<std::string>());
    kf.sense = motion_sense_from_string(detail::field(s, "sense").get<std::string>());
    plan.steps.push_back(kf);
  }
  plan.validate();
  return plan;
}

}  // namespace crayon
