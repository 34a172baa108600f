#pragma once

#include "crayon/action.hpp"
#include "crayon/camera.hpp"
#include "crayon/core.hpp"
#include "crayon/objective.hpp"
#include "crayon/prompt.hpp"

#include <functional>
#include <optional>
#include <string_view>

namespace crayon {

/// Plane of 3D directions at a pixel whose image projection is parallel to a
/// 2D direction. Members a*ray + b*in_plane with b > 0 project to +dir2d.
struct FeasibleFamily {
  Vec3 ray = Vec3::UnitZ();
  Vec3 in_plane = Vec3::UnitX();
  /// Unit normal of the plane spanned by ray and in_plane.
  Vec3 normal = Vec3::UnitY();

  Vec3 project_onto(const Vec3& v) const { return v - v.dot(normal) * normal; }
  /// Coefficient along in_plane; its sign says which way the member projects.
  double side(const Vec3& v) const { return v.dot(in_plane); }
};

inline FeasibleFamily feasible_family(const Vec2& dir2d, const Vec2& pixel, const CameraIntrinsics& k,
                                      const CameraExtrinsics& e) {
  if (!k.in_bounds(pixel)) throw Error(ErrorCode::invalid_argument, "pixel outside the image");
  const Vec2 d = normalized_or_throw(dir2d);
  FeasibleFamily f;
  f.ray = pixel_ray(pixel, k, e);
  const Vec3 ahead = pixel_ray(pixel + d, k, e);
  f.in_plane = (ahead - ahead.dot(f.ray) * f.ray).normalized();
  f.normal = f.ray.cross(f.in_plane).normalized();
  return f;
}

/// Returns the joint's free direction at a world point, when a scene is attached.
using MotionHint = std::function<std::optional<Vec3>(const Vec3&)>;

struct Observation {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
  const DepthImage* depth = nullptr;
  MotionHint motion_hint;
};

struct SolverConfig {
  double w_proj = 1.0;
  double w_ortho = 1.0;
  double w_normal = 0.3;
  int max_iters = 500;
  double tol = 1e-8;
  int normal_window = 5;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& msg, PredictedAction best, double final_loss)
      : Error(ErrorCode::non_convergence, msg), best_(std::move(best)), final_loss_(final_loss) {}

  const PredictedAction& best() const { return best_; }
  double final_loss() const { return final_loss_; }

 private:
  PredictedAction best_;
  double final_loss_;
};

struct SolverReport {
  PredictedAction action;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
};

namespace detail {

/// Lifting objective over the (z, y, m) unit directions.
struct LiftingObjective {
  Vec3 origin;
  double step;
  Vec3 approach_prior;  // -surface normal
  std::optional<Vec2> z2d, y2d, m2d;
  const CameraIntrinsics* k;
  const CameraExtrinsics* e;
  SolverConfig cfg;

  double value(const std::array<Vec3, 3>& v, std::array<Vec3, 3>* grad = nullptr) const {
    double total = 0.0;
    if (grad) grad->fill(Vec3::Zero());
    const std::array<const std::optional<Vec2>*, 3> targets{&z2d, &y2d, &m2d};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!targets[i]->has_value()) continue;
      const auto t = projection_term(origin, v[i], **targets[i], step, *k, *e);
      total += cfg.w_proj * t.value;
      if (grad) (*grad)[i] += cfg.w_proj * t.gradient;
    }
    const auto og = orthogonal_loss_gradient(v[0], v[1]);
    total += cfg.w_ortho * og.value;
    const Vec3 zh = v[0].normalized();
    total += cfg.w_normal * (1.0 - zh.dot(approach_prior));
    if (grad) {
      (*grad)[0] += cfg.w_ortho * og.d_first;
      (*grad)[1] += cfg.w_ortho * og.d_second;
      (*grad)[0] -= cfg.w_normal * (approach_prior - zh.dot(approach_prior) * zh) / v[0].norm();
    }
    return total;
  }
};

inline Vec3 member_with_side(const FeasibleFamily& f, const Vec3& candidate, const Vec3& fallback) {
  Vec3 v = f.project_onto(candidate);
  if (v.norm() < 1e-9) return fallback;
  v.normalize();
  if (f.side(v) < 0.0) v = -v;
  if (f.side(v) < 1e-6) return fallback;
  return v;
}

inline Vec3 up_tie_break(const Vec3& z) {
  Vec3 y = Vec3::UnitZ() - Vec3::UnitZ().dot(z) * z;
  if (y.norm() < 1e-3) y = Vec3::UnitY() - Vec3::UnitY().dot(z) * z;
  return y.normalized();
}

}  // namespace detail

/// Lifts a 2D prompt to a 3D contact pose by projected gradient descent on the
/// unit spheres, minimizing reprojection + orthogonality + a surface-normal
/// prior on the approach axis. Missing directions come from priors: z from the
/// surface normal, y from world up, and the moving direction from a retreat
/// along -z (flagged in `move_from_prior`).
inline SolverReport lift_pose_geometric_report(const CrayonPrompt& prompt, const Observation& obs,
                                               const SolverConfig& cfg = {}) {
  prompt.validate();
  if (!obs.depth) throw Error(ErrorCode::invalid_depth, "observation carries no depth");
  const auto& k = obs.intrinsics;
  const auto& e = obs.extrinsics;
  const Vec3 origin = lift(prompt.contact_px, *obs.depth, k, e);
  const Vec3 normal = estimate_normal(*obs.depth, prompt.contact_px, cfg.normal_window, k, e);
  const Vec3 approach = -normal;

  detail::LiftingObjective obj{origin, default_direction_step(origin, e), approach, prompt.z_dir, prompt.y_dir,
                               prompt.move_dir, &k, &e, cfg};

  std::optional<FeasibleFamily> fz, fy, fm;
  if (prompt.z_dir) fz = feasible_family(*prompt.z_dir, prompt.contact_px, k, e);
  if (prompt.y_dir) fy = feasible_family(*prompt.y_dir, prompt.contact_px, k, e);
  if (prompt.move_dir) fm = feasible_family(*prompt.move_dir, prompt.contact_px, k, e);

  std::array<Vec3, 3> v;
  v[0] = fz ? detail::member_with_side(*fz, approach, (fz->in_plane + fz->ray).normalized()) : approach;
  if (fy) {
    v[1] = detail::member_with_side(*fy, fy->normal.cross(v[0]), fy->in_plane);
  } else {
    v[1] = detail::up_tie_break(v[0]);
  }
  if (fm) {
    std::optional<Vec3> hint = obs.motion_hint ? obs.motion_hint(origin) : std::nullopt;
    const Vec3 no_scene = detail::member_with_side(*fm, fm->normal.cross(e.forward()), fm->in_plane);
    v[2] = hint && hint->norm() > 1e-9 ? detail::member_with_side(*fm, *hint, no_scene) : no_scene;
  } else {
    v[2] = -v[0];
  }

  std::array<bool, 3> free_var{true, true, prompt.move_dir.has_value()};
  SolverReport rep;
  const std::array<Vec3, 3> init = v;
  rep.initial_loss = obj.value(v);
  double loss = rep.initial_loss;
  double alpha = 0.5;
  bool converged = false;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    std::array<Vec3, 3> g;
    obj.value(v, &g);
    double gnorm = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      if (!free_var[i]) {
        g[i].setZero();
        continue;
      }
      g[i] -= g[i].dot(v[i]) * v[i];
      gnorm = std::max(gnorm, g[i].norm());
    }
    if (gnorm < 1e-12) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (alpha > 1e-14) {
      std::array<Vec3, 3> trial = v;
      for (std::size_t i = 0; i < 3; ++i)
        if (free_var[i]) trial[i] = (v[i] - alpha * g[i]).normalized();
      const double trial_loss = obj.value(trial);
      if (trial_loss < loss) {
        const double change = loss - trial_loss;
        v = trial;
        loss = trial_loss;
        accepted = true;
        alpha = std::min(1.0, alpha * 1.5);
        if (change <= cfg.tol * (1.0 + loss)) converged = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted || converged) {
      converged = true;
      ++it;
      break;
    }
  }

  const auto build = [&](const std::array<Vec3, 3>& dirs) {
    PredictedAction a;
    a.contact_px_pred = prompt.contact_px;
    a.contact_3d = origin;
    a.z_axis = dirs[0].normalized();
    a.y_axis = (dirs[1] - dirs[1].dot(a.z_axis) * a.z_axis).normalized();
    a.move_dir = dirs[2].normalized();
    a.move_from_prior = !prompt.move_dir.has_value();
    a.provenance = Provenance::solver;
    return a;
  };
  if (!converged) throw SolverError("lifting solver did not converge", build(v), loss);
  rep.action = build(v);
  rep.iterations = it;
  const auto loss_of = [&](const PredictedAction& a) { return obj.value({a.z_axis, a.y_axis, *a.move_dir}); };
  rep.final_loss = loss_of(rep.action);
  if (rep.final_loss > rep.initial_loss) {
    // Orthogonalizing y can cost more than the descent gained.
    rep.action = build(init);
    rep.final_loss = loss_of(rep.action);
  }
  return rep;
}

inline PredictedAction lift_pose_geometric(const CrayonPrompt& prompt, const Observation& obs,
                                           const SolverConfig& cfg = {}) {
  return lift_pose_geometric_report(prompt, obs, cfg).action;
}

/// Anything that turns a prompt plus observation into an action.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictedAction predict(const CrayonPrompt& prompt, const Observation& obs) const = 0;
  virtual std::string_view name() const = 0;
};

class SolverPredictor final : public Predictor {
 public:
  explicit SolverPredictor(SolverConfig cfg = {}) : cfg_(cfg) {}

  PredictedAction predict(const CrayonPrompt& prompt, const Observation& obs) const override {
    try {
      return lift_pose_geometric(prompt, obs, cfg_);
    } catch (const SolverError& err) {
      return err.best();
    }
  }
  std::string_view name() const override { return "solver"; }

 private:
  SolverConfig cfg_;
};

/// Replays a known action regardless of the prompt.
class GroundTruthPredictor final : public Predictor {
 public:
  using Source = std::function<GroundTruthAction(const CrayonPrompt&, const Observation&)>;
  explicit GroundTruthPredictor(Source source) : source_(std::move(source)) {}

  PredictedAction predict(const CrayonPrompt& prompt, const Observation& obs) const override {
    const GroundTruthAction gt = source_(prompt, obs);
    PredictedAction a;
    a.contact_px_pred = prompt.contact_px;
    a.contact_3d = gt.contact_point;
    a.z_axis = gt.z_axis;
    a.y_axis = gt.y_axis;
    a.move_dir = gt.move_dir;
    a.provenance = Provenance::ground_truth;
    return a;
  }
  std::string_view name() const override { return "gt"; }

 private:
  Source source_;
};

}  // namespace crayon
