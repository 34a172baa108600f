#include "crayon/eval.hpp"

#include <gtest/gtest.h>

using namespace crayon;

namespace {

ExperimentConfig tiny_config(std::uint64_t seed = 5) {
  ExperimentConfig c;
  c.seed = seed;
  c.train_count = 4;
  c.test_seen_count = 4;
  c.test_unseen_count = 2;
  c.threads = 2;
  return c;
}

}  // namespace

TEST(Config, PartialOverrideKeepsDefaults) {
  const ExperimentConfig c = ExperimentConfig::from_json({{"seed", 9}, {"toy", {{"hidden", 8}}}});
  const ExperimentConfig d;
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.toy.hidden, 8);
  EXPECT_EQ(c.toy.epochs, d.toy.epochs);
  EXPECT_EQ(c.train_count, d.train_count);
  EXPECT_EQ(c.seen_kinds, d.seen_kinds);
  EXPECT_EQ(ExperimentConfig::from_json(d.to_json()).fingerprint(), d.fingerprint());
}

TEST(Config, RejectsUnknownAndMalformedKeys) {
  const auto code = [](const Json& j) -> std::optional<ErrorCode> {
    try {
      ExperimentConfig::from_json(j);
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  EXPECT_EQ(code({{"sed", 1}}), ErrorCode::validation);
  EXPECT_EQ(code({{"train_count", "many"}}), ErrorCode::validation);
  EXPECT_EQ(code(Json::array()), ErrorCode::validation);
  EXPECT_EQ(code({{"seen_kinds", {"drawer"}}, {"unseen_kinds", {"drawer"}}}), ErrorCode::invalid_argument);
  EXPECT_EQ(code({{"noise_fractions", {1.5}}}), ErrorCode::invalid_argument);
  EXPECT_EQ(code({{"seen_kinds", {"sofa"}}}), ErrorCode::invalid_argument);
}

TEST(Config, FingerprintsTrackTheRightFields) {
  ExperimentConfig a = tiny_config();
  ExperimentConfig b = a;
  b.threads = 7;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.noise_fractions = {0.0};
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.collection_fingerprint(), b.collection_fingerprint());
  b.seed = 6;
  EXPECT_NE(a.collection_fingerprint(), b.collection_fingerprint());
  EXPECT_EQ(a.fingerprint().size(), 16u);
}

TEST(Collection, DeterministicAcrossThreadCounts) {
  ExperimentConfig a = tiny_config();
  ExperimentConfig b = a;
  b.threads = 1;
  const Dataset da = run_collection(a);
  const Dataset db = run_collection(b);
  EXPECT_EQ(da.to_json().dump(), db.to_json().dump());
  EXPECT_NE(run_collection(tiny_config(6)).fingerprint(), da.fingerprint());
}

TEST(Collection, SplitsAndKinds) {
  const Dataset d = run_collection(tiny_config());
  EXPECT_EQ(d.split(Split::train).size(), 4u);
  EXPECT_EQ(d.split(Split::test_seen).size(), 4u);
  EXPECT_EQ(d.split(Split::test_unseen).size(), 2u);
  EXPECT_EQ(d.test().size(), 6u);
  for (const auto* r : d.split(Split::test_unseen)) EXPECT_EQ(r->scene.kind, SceneKind::lever);
  for (const auto* r : d.split(Split::train)) EXPECT_NE(r->scene.kind, SceneKind::lever);
  EXPECT_EQ(d.records.front().id, "train-00000");
  EXPECT_TRUE(replay_failures(d).empty());
  // Records survive a JSON round trip.
  EXPECT_EQ(Dataset::from_json(d.to_json()).to_json().dump(), d.to_json().dump());
}

TEST(PromptSource, Parsing) {
  EXPECT_EQ(prompt_source_from_string("gt").kind, PromptSourceKind::gt);
  EXPECT_EQ(prompt_source_from_string("auto").kind, PromptSourceKind::autoprompt);
  const PromptSource p = prompt_source_from_string("perturbed=0.25");
  EXPECT_EQ(p.kind, PromptSourceKind::perturbed);
  EXPECT_DOUBLE_EQ(p.fraction, 0.25);
  EXPECT_EQ(p.label(), "perturbed=0.25");
  for (const char* bad : {"perturbed=", "perturbed=x", "perturbed=1.5", "perturbed=0.2x", "human"})
    EXPECT_THROW(prompt_source_from_string(bad), Error) << bad;
  PromptSource q;
  q.pattern = PromptPattern::PZ;
  EXPECT_EQ(q.label(), "gt/PZ");
  EXPECT_EQ(predictor_choice_from_string("toy"), PredictorChoice::toy);
  EXPECT_THROW(predictor_choice_from_string("oracle"), Error);
}

TEST(Eval, GroundTruthSucceedsAndPerturbationIsPaired) {
  const ExperimentConfig cfg = tiny_config();
  const Dataset d = run_collection(cfg);
  EvalContext ctx;
  ctx.predictor = PredictorChoice::gt;
  ctx.threads = 2;
  const MetricsReport r = run_eval(d, d.test(), prompt_source_from_string("gt"), cfg, ctx);
  EXPECT_EQ(r.conditions.front().tally().fraction(), "6/6");

  // Perturbation draws depend on the record, not on the fraction or the run.
  const DatasetRecord& rec = *d.test().front();
  const RenderResult frame = render(materialize(rec.scene), rec.intrinsics, rec.extrinsics);
  const Scene scene = materialize(rec.scene);
  const auto prompt = [&](double f) {
    PromptSource s;
    s.kind = PromptSourceKind::perturbed;
    s.fraction = f;
    return detail::eval_prompt(rec, s, frame, scene, ctx);
  };
  EXPECT_EQ(prompt(0.0), rec.prompt.prompt);
  EXPECT_EQ(prompt(0.3), prompt(0.3));
  const double a = angle_deg(*prompt(0.1).z_dir, *rec.prompt.prompt.z_dir);
  const double b = angle_deg(*prompt(0.2).z_dir, *rec.prompt.prompt.z_dir);
  EXPECT_GT(a, 0.0);
  EXPECT_GE(b, a);
}

TEST(Eval, ToyPredictorWithoutModelIsAnError) {
  const ExperimentConfig cfg = tiny_config();
  const Dataset d = run_collection(cfg);
  EvalContext ctx;
  ctx.predictor = PredictorChoice::toy;
  const SampleOutcome o = evaluate_record(*d.test().front(), {}, ctx);
  EXPECT_FALSE(o.success);
  EXPECT_EQ(o.failure, "error:invalid_argument");
  EXPECT_FALSE(o.err_z);
}

TEST(Report, RegeneratesByteIdenticallyFromRaw) {
  const ExperimentConfig cfg = tiny_config();
  const Dataset d = run_collection(cfg);
  EvalContext ctx;
  ctx.threads = 2;
  MetricsReport r = run_noise_sweep(d, cfg, ctx);
  r.loss_curves["demo"] = {3.0, 2.5};
  ASSERT_EQ(r.conditions.size(), cfg.noise_fractions.size());
  const std::string text = r.to_json().dump(1);
  EXPECT_EQ(MetricsReport::from_raw(Json::parse(text)).to_json().dump(1), text);
  EXPECT_EQ(r.condition("perturbed=0").outcomes.size(), 6u);
  EXPECT_THROW(r.condition("nope"), Error);
}

TEST(Report, TallyIsExact) {
  Condition c;
  c.label = "x";
  for (int i = 0; i < 7; ++i) {
    SampleOutcome o;
    o.success = i % 3 == 0;
    o.kind = i < 4 ? SceneKind::drawer : SceneKind::door;
    o.failure = o.success ? "" : "slip";
    o.err_z = i;
    c.outcomes.push_back(o);
  }
  const Tally t = c.tally();
  EXPECT_EQ(t.trials, 7);
  EXPECT_EQ(t.successes, 3);
  EXPECT_EQ(t.fraction(), "3/7");
  EXPECT_EQ(c.tally_if([](const SampleOutcome& o) { return o.kind == SceneKind::door; }).fraction(), "1/3");
  const Json s = condition_summary(c);
  EXPECT_EQ(s.at("per_kind").at("drawer").at("fraction"), "2/4");
  EXPECT_EQ(s.at("failures").at("slip"), 4);
  EXPECT_DOUBLE_EQ(s.at("angular_error_deg").at("z").at("median").get<double>(), 3.0);
  EXPECT_EQ(s.at("angular_error_deg").at("m").at("count"), 0);
  EXPECT_EQ(Tally{}.rate(), 0.0);
}
