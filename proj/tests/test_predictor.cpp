#include "crayon/planner.hpp"
#include "crayon/predictor.hpp"

#include <gtest/gtest.h>

using namespace crayon;

namespace {

struct Case {
  Scene scene;
  CameraExtrinsics camera;
  GroundTruthAction gt;
  RenderResult frame;
  CrayonPrompt prompt;
};

Case make_case(SceneKind kind, std::uint64_t seed) {
  const CameraIntrinsics k;
  for (std::uint64_t s = seed; s < seed + 50; ++s) {
    Case c{build_scene(kind, s), {}, {}, {}, {}};
    Rng rng(s);
    c.camera = sample_camera_pose(rng, {}, c.scene.target());
    try {
      c.gt = collect_ground_truth(c.scene, k, c.camera, rng);
      const auto d = derive_2d_prompts(c.gt, k, c.camera);
      if (d.remedied()) continue;
      c.prompt = d.prompt;
    } catch (const Error&) {
      continue;
    }
    c.frame = render(c.scene, k, c.camera);
    return c;
  }
  throw std::runtime_error("no usable seed");
}

}  // namespace

TEST(FeasibleFamily, MembersProjectAlongPromptedDirection) {
  const CameraIntrinsics k;
  const CameraExtrinsics e = look_at(Vec3(4, 1, 3), Vec3(0, 0, 0.8));
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const Vec2 px(rng.uniform(20, 315), rng.uniform(20, 315));
    const double a = rng.uniform(0, 2 * kPi);
    const Vec2 dir(std::cos(a), std::sin(a));
    const FeasibleFamily f = feasible_family(dir, px, k, e);
    EXPECT_NEAR(f.normal.dot(f.ray), 0.0, 1e-12);
    EXPECT_NEAR(f.normal.dot(f.in_plane), 0.0, 1e-12);
    const Vec3 origin = lift(px, rng.uniform(2.0, 8.0), k, e);
    const Vec3 member = (rng.uniform(-1, 1) * f.ray + rng.uniform(0.2, 1.0) * f.in_plane).normalized();
    const auto proj = project_direction(origin, member, k, e);
    ASSERT_TRUE(proj);
    EXPECT_LT(angle_deg(*proj, dir), 1e-3);
  }
  EXPECT_THROW(feasible_family(Vec2(1, 0), Vec2(-10, 5), k, e), Error);
}

TEST(Solver, FullPromptRecoversGroundTruth) {
  const CameraIntrinsics k;
  for (auto kind : kAllSceneKinds) {
    const Case c = make_case(kind, 200);
    const Observation obs{k, c.camera, &c.frame.depth, scene_motion_hint(c.scene)};
    const SolverReport rep = lift_pose_geometric_report(c.prompt, obs);
    const PredictedAction& a = rep.action;
    EXPECT_EQ(a.provenance, Provenance::solver);
    EXPECT_LE(rep.final_loss, rep.initial_loss);
    EXPECT_LT(angle_deg(a.z_axis, c.gt.z_axis), 5.0) << to_string(kind);
    EXPECT_LT(angle_deg(a.y_axis, c.gt.y_axis), 5.0) << to_string(kind);
    ASSERT_TRUE(a.move_dir);
    EXPECT_LT(angle_deg(*a.move_dir, *c.gt.move_dir), 5.0) << to_string(kind);
    EXPECT_FALSE(a.move_from_prior);
    EXPECT_LT(std::abs(a.z_axis.dot(a.y_axis)), 1e-9);
    EXPECT_NEAR(a.z_axis.norm(), 1.0, 1e-12);
    EXPECT_LT((a.contact_3d - c.gt.contact_point).norm(), 0.02);
    // Predicted directions reproject onto the prompted ones.
    EXPECT_LT(angle_deg(*project_direction(a.contact_3d, a.z_axis, k, c.camera), *c.prompt.z_dir), 1.0);
    EXPECT_LT(angle_deg(*project_direction(a.contact_3d, a.y_axis, k, c.camera), *c.prompt.y_dir), 1.0);
  }
}

TEST(Solver, MissingDirectionsUsePriors) {
  const CameraIntrinsics k;
  const Case c = make_case(SceneKind::drawer, 300);
  const Observation obs{k, c.camera, &c.frame.depth, {}};

  const PredictedAction p = lift_pose_geometric(restrict_to(c.prompt, PromptPattern::P), obs);
  // z from the surface normal (drawer front faces +x).
  EXPECT_LT(angle_deg(p.z_axis, -Vec3::UnitX()), 1.0);
  ASSERT_TRUE(p.move_dir);
  EXPECT_TRUE(p.move_from_prior);
  EXPECT_LT((*p.move_dir + p.z_axis).norm(), 1e-12);
  // y from world up, orthogonalized against z.
  EXPECT_LT(angle_deg(p.y_axis, Vec3::UnitZ()), 1.0);

  const PredictedAction pz = lift_pose_geometric(restrict_to(c.prompt, PromptPattern::PZ), obs);
  EXPECT_TRUE(pz.move_from_prior);
  EXPECT_LT(angle_deg(pz.z_axis, c.gt.z_axis), 5.0);
}

TEST(Solver, RequiresDepth) {
  const Case c = make_case(SceneKind::drawer, 400);
  const Observation obs{CameraIntrinsics{}, c.camera, nullptr, {}};
  try {
    lift_pose_geometric(c.prompt, obs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_depth);
  }
  CrayonPrompt bad = c.prompt;
  bad.move_dir.reset();
  const Observation ok{CameraIntrinsics{}, c.camera, &c.frame.depth, {}};
  EXPECT_THROW(lift_pose_geometric(bad, ok), Error);
}

TEST(Solver, PredictorExecutesSuccessfully) {
  const CameraIntrinsics k;
  const SolverPredictor solver;
  EXPECT_EQ(solver.name(), "solver");
  int ok = 0;
  for (std::uint64_t s = 500; s < 510; ++s) {
    Case c = make_case(SceneKind::drawer, s);
    const Observation obs{k, c.camera, &c.frame.depth, scene_motion_hint(c.scene)};
    const PredictedAction a = solver.predict(c.prompt, obs);
    ExecutionParams p;
    p.sense = MotionSense::open;
    ok += execute(c.scene, a.contact_action(), p).success;
  }
  EXPECT_EQ(ok, 10);
}

TEST(GroundTruthPredictor, EchoesSource) {
  GroundTruthAction gt;
  gt.contact_point = Vec3(1, 2, 3);
  gt.z_axis = -Vec3::UnitX();
  gt.move_dir = Vec3::UnitX();
  const GroundTruthPredictor pred([&](const CrayonPrompt&, const Observation&) { return gt; });
  const PredictedAction a = pred.predict(make_prompt(Vec2(4, 5)), Observation{});
  EXPECT_EQ(a.contact_3d, gt.contact_point);
  EXPECT_EQ(a.contact_px_pred, Vec2(4, 5));
  EXPECT_EQ(a.provenance, Provenance::ground_truth);
  EXPECT_EQ(pred.name(), "gt");
}
