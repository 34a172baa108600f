#include "crayon/planner.hpp"

#include <gtest/gtest.h>

using namespace crayon;

namespace {

PredictedAction action_at(const Vec3& contact, const Vec3& z, const Vec3& y, std::optional<Vec3> m = {}) {
  PredictedAction a;
  a.contact_3d = contact;
  a.z_axis = z;
  a.y_axis = y;
  a.move_dir = m;
  return a;
}

struct DrawerCase {
  Scene scene;
  PlanContext ctx;
};

DrawerCase drawer_case(std::uint64_t seed) {
  for (std::uint64_t s = seed; s < seed + 50; ++s) {
    DrawerCase c{build_scene(SceneKind::drawer, s), {}};
    Rng rng(s);
    c.ctx.extrinsics = sample_camera_pose(rng, {}, c.scene.target());
    Rng probe(s);
    try {
      collect_ground_truth(c.scene, c.ctx.intrinsics, c.ctx.extrinsics, probe);
      return c;
    } catch (const Error&) {
    }
  }
  throw std::runtime_error("no usable seed");
}

/// Ground-truth replay for the scene as it stands, with the requested sense.
class SenseGroundTruth final : public Predictor {
 public:
  SenseGroundTruth(const Scene& scene, const PlanContext& ctx) : scene_(scene), ctx_(ctx) {}
  PredictedAction predict(const CrayonPrompt& prompt, const Observation&) const override {
    Rng rng(17);
    const MotionSense sense = prompt.move_dir && prompt.move_dir->x() < 0 ? MotionSense::close : MotionSense::open;
    const GroundTruthAction gt = collect_ground_truth(scene_, ctx_.intrinsics, ctx_.extrinsics, rng, sense);
    return GroundTruthPredictor([&](const CrayonPrompt&, const Observation&) { return gt; }).predict(prompt, {});
  }
  std::string_view name() const override { return "gt-sense"; }

 private:
  const Scene& scene_;
  const PlanContext& ctx_;
};

}  // namespace

TEST(Planner, PrimitiveTaxonomy) {
  EXPECT_TRUE(requires_move_prompt(PrimitiveKind::pull));
  EXPECT_TRUE(requires_move_prompt(PrimitiveKind::push));
  EXPECT_TRUE(requires_move_prompt(PrimitiveKind::pick));
  EXPECT_FALSE(requires_move_prompt(PrimitiveKind::place));
  EXPECT_FALSE(requires_move_prompt(PrimitiveKind::move));
  EXPECT_FALSE(requires_move_prompt(PrimitiveKind::rotate));
  EXPECT_EQ(aperture_schedule(PrimitiveKind::place), std::pair(Aperture::closed, Aperture::open));
  EXPECT_EQ(aperture_schedule(PrimitiveKind::push), std::pair(Aperture::closed, Aperture::closed));
  for (auto p : kAllPrimitives) EXPECT_EQ(primitive_from_string(to_string(p)), p);
  EXPECT_THROW(primitive_from_string("twist"), Error);
}

TEST(Planner, PullWaypoints) {
  const PredictedAction a = action_at(Vec3(1, 2, 3), -Vec3::UnitX(), Vec3::UnitZ(), Vec3(2, 0, 0));
  const auto wps = plan_step(a, PrimitiveKind::pull, 0.3);
  ASSERT_EQ(wps.size(), 12u);
  EXPECT_LT((wps[0].position - Vec3(1.15, 2, 3)).norm(), 1e-12);
  EXPECT_EQ(wps[0].phase, Phase::pre_move);
  EXPECT_EQ(wps[0].aperture, Aperture::open);
  EXPECT_EQ(wps[1].position, Vec3(1, 2, 3));
  EXPECT_EQ(wps[1].phase, Phase::contact);
  EXPECT_EQ(wps[1].aperture, Aperture::closed);
  EXPECT_LT((wps[11].position - Vec3(1.3, 2, 3)).norm(), 1e-12);
  EXPECT_LT((wps[5].position - Vec3(1.12, 2, 3)).norm(), 1e-12);
  for (std::size_t i = 2; i < wps.size(); ++i) EXPECT_EQ(wps[i].phase, Phase::post_move);
  for (const auto& w : wps) EXPECT_LT((w.rotation.col(2) + Vec3::UnitX()).norm(), 1e-12);
  EXPECT_EQ(to_json(wps[0]).at("phase"), "pre_move");
}

TEST(Planner, NonMovingPrimitivesStopAtContact) {
  const PredictedAction a = action_at(Vec3::Zero(), Vec3::UnitZ(), Vec3::UnitY());
  const auto place = plan_step(a, PrimitiveKind::place, 1.0);
  ASSERT_EQ(place.size(), 2u);
  EXPECT_EQ(place[0].aperture, Aperture::closed);
  EXPECT_EQ(place[1].aperture, Aperture::open);
  EXPECT_THROW(plan_step(a, PrimitiveKind::pull, 1.0), Error);
  EXPECT_THROW(plan_step(a, PrimitiveKind::rotate, 1.0), Error);
}

TEST(Planner, RotateAngleIsSignedAboutZ) {
  const Vec3 z = -Vec3::UnitX();
  const Vec3 y0 = Vec3::UnitZ();
  const double angle = deg_to_rad(30.0);
  const Vec3 y1 = rotate_about(y0, z, angle);
  const RotatePlan plan = plan_rotate(action_at(Vec3::Zero(), z, y0), action_at(Vec3(0.01, 0, 0), z, y1));
  EXPECT_NEAR(plan.angle, angle, 1e-12);
  ASSERT_EQ(plan.wrist_angles.size(), 10u);
  EXPECT_NEAR(plan.wrist_angles.front(), angle / 10, 1e-12);
  EXPECT_NEAR(plan.wrist_angles.back(), angle, 1e-12);
  EXPECT_EQ(plan.approach.size(), 2u);
  const RotatePlan back = plan_rotate(action_at(Vec3::Zero(), z, y1), action_at(Vec3::Zero(), z, y0));
  EXPECT_NEAR(back.angle, -angle, 1e-12);

  EXPECT_THROW(plan_rotate(action_at(Vec3::Zero(), z, y0), action_at(Vec3(0.1, 0, 0), z, y1)), Error);
  EXPECT_THROW(plan_rotate(action_at(Vec3::Zero(), z, y0), action_at(Vec3::Zero(), Vec3::UnitY(), y0)), Error);
}

TEST(Planner, KeyFramePlanValidation) {
  KeyFramePlan plan;
  EXPECT_THROW(plan.validate(), Error);
  plan.steps = {{make_prompt(Vec2(1, 1)), PrimitiveKind::rotate}};
  EXPECT_THROW(plan.validate(), Error);
  plan.steps.push_back({make_prompt(Vec2(1, 1)), PrimitiveKind::pull});
  EXPECT_THROW(plan.validate(), Error);
  plan.steps.back().primitive = PrimitiveKind::rotate;
  EXPECT_NO_THROW(plan.validate());

  plan.steps.push_back({make_prompt(Vec2(3, 4), Vec2(1, 0), Vec2(0, 1), Vec2(-1, 0)), PrimitiveKind::push,
                        MotionSense::close});
  const KeyFramePlan back = key_frame_plan_from_json(to_json(plan));
  ASSERT_EQ(back.steps.size(), 3u);
  EXPECT_EQ(back.steps[2].sense, MotionSense::close);
  EXPECT_EQ(back.steps[2].prompt, plan.steps[2].prompt);
  EXPECT_EQ(to_json(back).dump(), to_json(plan).dump());
}

TEST(Planner, MoveDistanceUsesJointRange) {
  const Scene drawer = build_scene(SceneKind::drawer, 2);
  EXPECT_NEAR(move_distance(drawer, Vec3::Zero()), 0.5 * drawer.joint.range(), 1e-12);
  const Scene door = build_scene(SceneKind::door, 2);
  const Vec3 p = door.joint.pivot + Vec3(0, 0.4, 0);
  EXPECT_NEAR(move_distance(door, p), 0.5 * door.joint.range() * 0.4, 1e-12);
}

TEST(Planner, OpenThenCloseSucceedsAsConjunction) {
  DrawerCase c = drawer_case(30);
  const SenseGroundTruth predictor(c.scene, c.ctx);
  KeyFramePlan plan;
  plan.steps = {{make_prompt(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 0)), PrimitiveKind::pull, MotionSense::open},
                {make_prompt(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(-1, 0)), PrimitiveKind::push,
                 MotionSense::close}};
  const double q0 = c.scene.joint.state;
  const PlanResult r = execute_plan(c.scene, plan, predictor, c.ctx);
  ASSERT_EQ(r.steps.size(), 2u);
  EXPECT_TRUE(r.steps[0].success);
  EXPECT_TRUE(r.steps[1].success);
  EXPECT_TRUE(r.success);
  EXPECT_FALSE(r.aborted_at);
  EXPECT_EQ(r.steps[0].waypoints.size(), 12u);
  EXPECT_NEAR(c.scene.joint.state, q0, 0.05 * c.scene.joint.range());
  const Json j = to_json(r.steps[0]);
  EXPECT_EQ(j.at("primitive"), "pull");
  EXPECT_TRUE(j.at("success").get<bool>());
}

TEST(Planner, FailedStepAbortsPlan) {
  DrawerCase c = drawer_case(60);
  const SenseGroundTruth predictor(c.scene, c.ctx);
  KeyFramePlan plan;
  // The second step asks to open further while the action closes.
  plan.steps = {{make_prompt(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 0)), PrimitiveKind::pull, MotionSense::open},
                {make_prompt(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(-1, 0)), PrimitiveKind::push, MotionSense::open},
                {make_prompt(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 0)), PrimitiveKind::pull, MotionSense::open}};
  const PlanResult r = execute_plan(c.scene, plan, predictor, c.ctx);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.aborted_at, 1u);
  EXPECT_EQ(r.steps.size(), 2u);
  EXPECT_TRUE(r.steps[0].success);
}
