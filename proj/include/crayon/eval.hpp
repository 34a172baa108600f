#pragma once

#include "crayon/auto_prompter.hpp"
#include "crayon/planner.hpp"
#include "crayon/predictor.hpp"
#include "crayon/prompt.hpp"
#include "crayon/records.hpp"
#include "crayon/rng.hpp"
#include "crayon/scene.hpp"
#include "crayon/toy_model.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace crayon {

enum class Split { train, test_seen, test_unseen };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test_seen: return "test_seen";
    case Split::test_unseen: return "test_unseen";
  }
  return "unknown";
}

inline Split split_from_string(std::string_view s) {
  for (auto x : {Split::train, Split::test_seen, Split::test_unseen})
    if (to_string(x) == s) return x;
  throw Error(ErrorCode::validation, "unknown split: " + std::string(s));
}

// --- configuration ------------------------------------------------------------------

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int train_count = 2000;
  int test_seen_count = 300;
  int test_unseen_count = 100;
  std::vector<SceneKind> seen_kinds{SceneKind::drawer, SceneKind::door, SceneKind::lid, SceneKind::button};
  std::vector<SceneKind> unseen_kinds{SceneKind::lever};
  CameraSamplingConfig camera;
  CameraIntrinsics intrinsics;
  /// Fresh scenes tried per record before collection gives up.
  int max_scene_retries = 50;
  std::vector<double> noise_fractions{0.0, 0.1, 0.2, 0.3, 0.4};
  SelectorMode selector = SelectorMode::oracle;
  int longhorizon_count = 100;
  std::vector<SceneKind> longhorizon_kinds{SceneKind::drawer, SceneKind::door};
  ToyConfig toy;
  /// 0 means one worker per hardware thread.
  int threads = 0;

  void validate() const {
    if (train_count < 0 || test_seen_count < 0 || test_unseen_count < 0 || longhorizon_count < 0)
      throw Error(ErrorCode::invalid_argument, "record counts must be non-negative");
    if (seen_kinds.empty()) throw Error(ErrorCode::invalid_argument, "need at least one seen scene kind");
    for (auto k : unseen_kinds)
      if (std::find(seen_kinds.begin(), seen_kinds.end(), k) != seen_kinds.end())
        throw Error(ErrorCode::invalid_argument, "a kind cannot be both seen and unseen");
    if (test_unseen_count > 0 && unseen_kinds.empty())
      throw Error(ErrorCode::invalid_argument, "unseen records requested without unseen kinds");
    for (double f : noise_fractions)
      if (f < 0.0 || f > 1.0) throw Error(ErrorCode::invalid_argument, "noise fractions must be in [0, 1]");
    camera.validate();
    intrinsics.validate();
    toy.validate();
  }

  Json to_json() const {
    const auto kinds = [](const std::vector<SceneKind>& ks) {
      Json a = Json::array();
      for (auto k : ks) a.push_back(std::string(crayon::to_string(k)));
      return a;
    };
    return {{"seed", seed},
            {"train_count", train_count},
            {"test_seen_count", test_seen_count},
            {"test_unseen_count", test_unseen_count},
            {"seen_kinds", kinds(seen_kinds)},
            {"unseen_kinds", kinds(unseen_kinds)},
            {"camera",
             {{"distance", {camera.distance_range.first, camera.distance_range.second}},
              {"azimuth_deg", {camera.azimuth_deg.first, camera.azimuth_deg.second}},
              {"altitude_deg", {camera.altitude_deg.first, camera.altitude_deg.second}}}},
            {"intrinsics", crayon::to_json(intrinsics)},
            {"max_scene_retries", max_scene_retries},
            {"noise_fractions", noise_fractions},
            {"selector", std::string(crayon::to_string(selector))},
            {"longhorizon_count", longhorizon_count},
            {"longhorizon_kinds", kinds(longhorizon_kinds)},
            {"toy", toy.to_json()}};
  }

  /// Overrides defaults with whatever keys `j` carries; unknown keys are errors.
  static ExperimentConfig from_json(const Json& j) {
    static const std::vector<std::string> known{"seed",           "train_count",       "test_seen_count",
                                                "test_unseen_count", "seen_kinds",       "unseen_kinds",
                                                "camera",         "intrinsics",        "max_scene_retries",
                                                "noise_fractions", "selector",         "longhorizon_count",
                                                "longhorizon_kinds", "toy",            "threads"};
    if (!j.is_object()) throw Error(ErrorCode::validation, "config must be an object");
    for (const auto& [key, _] : j.items())
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw Error(ErrorCode::validation, "unknown config key: " + key);
    ExperimentConfig c;
    try {
      const auto kinds = [](const Json& a) {
        std::vector<SceneKind> out;
        for (const auto& k : a) out.push_back(scene_kind_from_string(k.get<std::string>()));
        return out;
      };
      if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("train_count")) c.train_count = j.at("train_count").get<int>();
      if (j.contains("test_seen_count")) c.test_seen_count = j.at("test_seen_count").get<int>();
      if (j.contains("test_unseen_count")) c.test_unseen_count = j.at("test_unseen_count").get<int>();
      if (j.contains("seen_kinds")) c.seen_kinds = kinds(j.at("seen_kinds"));
      if (j.contains("unseen_kinds")) c.unseen_kinds = kinds(j.at("unseen_kinds"));
      if (j.contains("camera")) {
        const Json& cam = j.at("camera");
        const auto range = [](const Json& a) { return std::pair{a.at(0).get<double>(), a.at(1).get<double>()}; };
        if (cam.contains("distance")) c.camera.distance_range = range(cam.at("distance"));
        if (cam.contains("azimuth_deg")) c.camera.azimuth_deg = range(cam.at("azimuth_deg"));
        if (cam.contains("altitude_deg")) c.camera.altitude_deg = range(cam.at("altitude_deg"));
      }
      if (j.contains("intrinsics")) c.intrinsics = intrinsics_from_json(j.at("intrinsics"));
      if (j.contains("max_scene_retries")) c.max_scene_retries = j.at("max_scene_retries").get<int>();
      if (j.contains("noise_fractions")) c.noise_fractions = j.at("noise_fractions").get<std::vector<double>>();
      if (j.contains("selector")) c.selector = selector_mode_from_string(j.at("selector").get<std::string>());
      if (j.contains("longhorizon_count")) c.longhorizon_count = j.at("longhorizon_count").get<int>();
      if (j.contains("longhorizon_kinds")) c.longhorizon_kinds = kinds(j.at("longhorizon_kinds"));
      if (j.contains("toy")) {
        Json merged = c.toy.to_json();
        merged.merge_patch(j.at("toy"));
        c.toy = ToyConfig::from_json(merged);
      }
      if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::validation, std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
  }

  /// Thread count is deliberately excluded: it never changes results.
  std::string fingerprint() const { return hex64(fnv1a(to_json().dump())); }

  /// Fingerprint of the fields that determine the collected dataset.
  std::string collection_fingerprint() const {
    const Json j = to_json();
    Json sub = Json::object();
    for (const char* k : {"seed", "train_count", "test_seen_count", "test_unseen_count", "seen_kinds", "unseen_kinds",
                          "camera", "intrinsics", "max_scene_retries"})
      sub[k] = j.at(k);
    return hex64(fnv1a(sub.dump()));
  }
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  return fnv1a(std::to_string(seed) + "/" + std::string(tag) + "/" + std::to_string(index));
}

/// Runs body(i) for i in [0, n) on `threads` workers; results land by index.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& body) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// --- dataset ------------------------------------------------------------------------

struct DatasetRecord {
  std::string id;
  Split split = Split::train;
  SceneRef scene;
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
  MotionSense sense = MotionSense::open;
  PromptRecord prompt;
  GroundTruthAction gt;
  /// Remedy tilt applied to z, y, m when their projections were degenerate.
  std::array<double, 3> remedy_deg{0.0, 0.0, 0.0};
  /// Raster file names (relative to the dataset directory) and content hashes.
  std::string rgb_file, depth_file, rgb_hash, depth_hash;
};

inline Json to_json(const DatasetRecord& r) {
  return {{"id", r.id},
          {"split", std::string(to_string(r.split))},
          {"scene", to_json(r.scene)},
          {"camera", camera_json(r.intrinsics, r.extrinsics)},
          {"sense", std::string(to_string(r.sense))},
          {"prompt", to_json(r.prompt)},
          {"ground_truth", to_json(r.gt)},
          {"ground_truth_text", format_ground_truth_text(r.gt, r.prompt.prompt.contact_px)},
          {"remedy_deg", r.remedy_deg},
          {"rgb", {{"file", r.rgb_file}, {"hash", r.rgb_hash}}},
          {"depth", {{"file", r.depth_file}, {"hash", r.depth_hash}}}};
}

inline DatasetRecord dataset_record_from_json(const Json& j) {
  try {
    DatasetRecord r;
    r.id = detail::field(j, "id").get<std::string>();
    r.split = split_from_string(detail::field(j, "split").get<std::string>());
    r.scene = scene_ref_from_json(detail::field(j, "scene"));
    const Json& cam = detail::field(j, "camera");
    r.intrinsics = intrinsics_from_json(detail::field(cam, "intrinsics"));
    r.extrinsics = extrinsics_from_json(detail::field(cam, "extrinsics"));
    r.sense = motion_sense_from_string(detail::field(j, "sense").get<std::string>());
    r.prompt = prompt_record_from_json(detail::field(j, "prompt"));
    r.gt = ground_truth_from_json(detail::field(j, "ground_truth"));
    r.remedy_deg = detail::field(j, "remedy_deg").get<std::array<double, 3>>();
    r.rgb_file = detail::field(detail::field(j, "rgb"), "file").get<std::string>();
    r.rgb_hash = detail::field(detail::field(j, "rgb"), "hash").get<std::string>();
    r.depth_file = detail::field(detail::field(j, "depth"), "file").get<std::string>();
    r.depth_hash = detail::field(detail::field(j, "depth"), "hash").get<std::string>();
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed dataset record: ") + e.what());
  }
}

struct Dataset {
  std::vector<DatasetRecord> records;
  /// Scenes discarded because no verified contact could be found.
  int skipped_scenes = 0;
  std::map<std::string, int> skipped_by_kind;

  std::vector<const DatasetRecord*> split(Split s) const {
    std::vector<const DatasetRecord*> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(&r);
    return out;
  }

  /// Test records of both splits, in dataset order.
  std::vector<const DatasetRecord*> test() const {
    std::vector<const DatasetRecord*> out;
    for (const auto& r : records)
      if (r.split != Split::train) out.push_back(&r);
    return out;
  }

  Json to_json() const {
    Json recs = Json::array();
    for (const auto& r : records) recs.push_back(crayon::to_json(r));
    return {{"records", recs}, {"skipped_scenes", skipped_scenes}, {"skipped_by_kind", skipped_by_kind}};
  }

  static Dataset from_json(const Json& j) {
    Dataset d;
    for (const auto& r : detail::field(j, "records")) d.records.push_back(dataset_record_from_json(r));
    d.skipped_scenes = detail::field(j, "skipped_scenes").get<int>();
    d.skipped_by_kind = detail::field(j, "skipped_by_kind").get<std::map<std::string, int>>();
    return d;
  }

  std::string fingerprint() const { return hex64(fnv1a(to_json().dump())); }
};

/// Builds one verified record for a scene, or nothing when collection fails.
inline std::optional<DatasetRecord> collect_record(SceneKind kind, std::uint64_t scene_seed, const ExperimentConfig& cfg,
                                                   MotionSense sense = MotionSense::open) {
  Scene scene = build_scene(kind, scene_seed);
  Rng rng(scene_seed ^ 0x5eedc0ffee);
  DatasetRecord r;
  r.scene = scene_ref(scene);
  r.intrinsics = cfg.intrinsics;
  r.extrinsics = sample_camera_pose(rng, cfg.camera, scene.target());
  r.sense = sense;
  try {
    r.gt = collect_ground_truth(scene, r.intrinsics, r.extrinsics, rng, sense);
    const DerivedPrompt dp = derive_2d_prompts(r.gt, r.intrinsics, r.extrinsics);
    r.prompt = {dp.prompt, r.scene, camera_ref(r.intrinsics, r.extrinsics)};
    r.remedy_deg = dp.remedy_deg;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::no_graspable_region || e.code() == ErrorCode::degenerate ||
        e.code() == ErrorCode::invalid_argument || e.code() == ErrorCode::behind_camera)
      return std::nullopt;
    throw;
  }
  return r;
}

/// Collects the configured train / test_seen / test_unseen records. Train and
/// test_seen cycle through the seen kinds; test_unseen uses only unseen kinds.
inline Dataset run_collection(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Slot {
    Split split;
    SceneKind kind;
    int index;
  };
  std::vector<Slot> slots;
  const auto add = [&](Split s, const std::vector<SceneKind>& kinds, int n) {
    for (int i = 0; i < n; ++i) slots.push_back({s, kinds[static_cast<std::size_t>(i) % kinds.size()], i});
  };
  add(Split::train, cfg.seen_kinds, cfg.train_count);
  add(Split::test_seen, cfg.seen_kinds, cfg.test_seen_count);
  add(Split::test_unseen, cfg.unseen_kinds, cfg.test_unseen_count);

  std::vector<std::optional<DatasetRecord>> out(slots.size());
  std::vector<int> skipped(slots.size(), 0);
  detail::parallel_for(slots.size(), cfg.threads, [&](std::size_t i) {
    const Slot& s = slots[i];
    for (int attempt = 0; attempt < cfg.max_scene_retries; ++attempt) {
      const std::uint64_t seed =
          detail::mix_seed(cfg.seed, std::string(to_string(s.split)) + "#" + std::to_string(s.index), attempt);
      if (auto r = collect_record(s.kind, seed, cfg)) {
        r->split = s.split;
        char id[64];
        std::snprintf(id, sizeof id, "%s-%05d", std::string(to_string(s.split)).c_str(), s.index);
        r->id = id;
        out[i] = std::move(r);
        return;
      }
      ++skipped[i];
    }
  });
  Dataset d;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    d.skipped_scenes += skipped[i];
    if (skipped[i]) d.skipped_by_kind[std::string(to_string(slots[i].kind))] += skipped[i];
    if (!out[i])
      throw Error(ErrorCode::no_graspable_region,
                  "no collectable scene for " + std::string(to_string(slots[i].kind)) + " after retries");
    d.records.push_back(std::move(*out[i]));
  }
  return d;
}

/// Replays every ground-truth action on a fresh scene; returns the failures.
inline std::vector<std::string> replay_failures(const Dataset& d) {
  std::vector<std::string> bad;
  for (const auto& r : d.records) {
    Scene s = materialize(r.scene);
    ExecutionParams p;
    p.sense = r.sense;
    if (!execute(s, r.gt.contact_action(), p).success) bad.push_back(r.id);
  }
  return bad;
}

// --- evaluation ---------------------------------------------------------------------

enum class PredictorChoice { solver, toy, gt };

inline std::string_view to_string(PredictorChoice p) {
  switch (p) {
    case PredictorChoice::solver: return "solver";
    case PredictorChoice::toy: return "toy";
    case PredictorChoice::gt: return "gt";
  }
  return "unknown";
}

inline PredictorChoice predictor_choice_from_string(std::string_view s) {
  for (auto p : {PredictorChoice::solver, PredictorChoice::toy, PredictorChoice::gt})
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::invalid_argument, "unknown predictor: " + std::string(s));
}

enum class PromptSourceKind { gt, autoprompt, perturbed };

struct PromptSource {
  PromptSourceKind kind = PromptSourceKind::gt;
  double fraction = 0.0;
  PromptPattern pattern = PromptPattern::PZYM;

  std::string label() const {
    std::string s;
    switch (kind) {
      case PromptSourceKind::gt: s = "gt"; break;
      case PromptSourceKind::autoprompt: s = "auto"; break;
      case PromptSourceKind::perturbed: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "perturbed=%g", fraction);
        s = buf;
        break;
      }
    }
    if (pattern != PromptPattern::PZYM) s += "/" + std::string(to_string(pattern));
    return s;
  }
};

/// Parses "gt", "auto" or "perturbed=<f>".
inline PromptSource prompt_source_from_string(std::string_view s) {
  PromptSource p;
  if (s == "gt") return p;
  if (s == "auto") {
    p.kind = PromptSourceKind::autoprompt;
    return p;
  }
  constexpr std::string_view prefix = "perturbed=";
  if (s.substr(0, prefix.size()) == prefix) {
    p.kind = PromptSourceKind::perturbed;
    const std::string num(s.substr(prefix.size()));
    char* end = nullptr;
    p.fraction = std::strtod(num.c_str(), &end);
    if (num.empty() || end != num.c_str() + num.size() || p.fraction < 0.0 || p.fraction > 1.0)
      throw Error(ErrorCode::invalid_argument, "perturbed fraction must be a number in [0, 1]");
    return p;
  }
  throw Error(ErrorCode::invalid_argument, "unknown prompt source: " + std::string(s));
}

struct SampleOutcome {
  std::string id;
  SceneKind kind = SceneKind::drawer;
  Split split = Split::test_seen;
  bool success = false;
  double displacement = 0.0;
  /// Failure reason, or "error:<code>" when prediction or prompting failed.
  std::string failure;
  std::optional<double> err_z, err_y, err_m;
};

inline Json to_json(const SampleOutcome& o) {
  const auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"id", o.id},
          {"kind", std::string(to_string(o.kind))},
          {"split", std::string(to_string(o.split))},
          {"success", o.success},
          {"displacement", o.displacement},
          {"failure", o.failure},
          {"err_z", opt(o.err_z)},
          {"err_y", opt(o.err_y)},
          {"err_m", opt(o.err_m)}};
}

inline SampleOutcome sample_outcome_from_json(const Json& j) {
  const auto opt = [&](const char* k) {
    return j.at(k).is_null() ? std::optional<double>() : std::optional<double>(j.at(k).get<double>());
  };
  SampleOutcome o;
  o.id = j.at("id").get<std::string>();
  o.kind = scene_kind_from_string(j.at("kind").get<std::string>());
  o.split = split_from_string(j.at("split").get<std::string>());
  o.success = j.at("success").get<bool>();
  o.displacement = j.at("displacement").get<double>();
  o.failure = j.at("failure").get<std::string>();
  o.err_z = opt("err_z");
  o.err_y = opt("err_y");
  o.err_m = opt("err_m");
  return o;
}

/// Everything an evaluation run needs besides the records.
struct EvalContext {
  PredictorChoice predictor = PredictorChoice::solver;
  const ToyModelParams* toy = nullptr;
  SelectorMode selector = SelectorMode::oracle;
  SelectorClient* selector_client = nullptr;
  std::uint64_t seed = 0;
  int threads = 0;
  PlannerParams planner;
  ExecutionParams execution;
};

namespace detail {

inline CrayonPrompt eval_prompt(const DatasetRecord& r, const PromptSource& src, const RenderResult& frame,
                                const Scene& scene, const EvalContext& ctx) {
  switch (src.kind) {
    case PromptSourceKind::gt: return restrict_to(r.prompt.prompt, src.pattern);
    case PromptSourceKind::perturbed: {
      // Same draws for every fraction, so sweeps are paired.
      Rng rng(mix_seed(ctx.seed, "noise", fnv1a(r.id)));
      return restrict_to(perturb(r.prompt.prompt, src.fraction, rng), src.pattern);
    }
    case PromptSourceKind::autoprompt: {
      AutoPromptContext ac;
      ac.mode = ctx.selector;
      ac.want_move = true;
      ac.truth = &r.prompt.prompt;
      ac.scene = &scene;
      ac.sense = r.sense;
      ac.client = ctx.selector_client;
      return restrict_to(auto_prompt(frame, r.intrinsics, r.extrinsics, ac).prompt, src.pattern);
    }
  }
  return r.prompt.prompt;
}

}  // namespace detail

/// Executes one record end to end as a single pull key-frame.
inline SampleOutcome evaluate_record(const DatasetRecord& r, const PromptSource& src, const EvalContext& ctx) {
  SampleOutcome o;
  o.id = r.id;
  o.kind = r.scene.kind;
  o.split = r.split;
  Scene scene = materialize(r.scene);
  try {
    const RenderResult frame = render(scene, r.intrinsics, r.extrinsics);
    KeyFramePlan plan;
    plan.steps.push_back({detail::eval_prompt(r, src, frame, scene, ctx), PrimitiveKind::pull, r.sense});
    PlanContext pc;
    pc.intrinsics = r.intrinsics;
    pc.extrinsics = r.extrinsics;
    pc.execution = ctx.execution;
    pc.planner = ctx.planner;
    std::unique_ptr<Predictor> owned;
    const Predictor* predictor = nullptr;
    switch (ctx.predictor) {
      case PredictorChoice::solver: owned = std::make_unique<SolverPredictor>(); break;
      case PredictorChoice::toy:
        if (!ctx.toy) throw Error(ErrorCode::invalid_argument, "toy predictor needs a trained model");
        owned = std::make_unique<ToyPredictor>(*ctx.toy);
        break;
      case PredictorChoice::gt:
        owned = std::make_unique<GroundTruthPredictor>([&r](const CrayonPrompt&, const Observation&) { return r.gt; });
        break;
    }
    predictor = owned.get();
    const PlanResult res = execute_plan(scene, plan, *predictor, pc);
    const StepResult& step = res.steps.front();
    o.success = res.success;
    o.displacement = step.execution.part_displacement;
    if (step.execution.failure_reason) o.failure = std::string(to_string(*step.execution.failure_reason));
    o.err_z = angle_deg(step.action.z_axis, r.gt.z_axis);
    o.err_y = angle_deg(step.action.y_axis, r.gt.y_axis);
    if (step.action.move_dir && r.gt.move_dir) o.err_m = angle_deg(*step.action.move_dir, *r.gt.move_dir);
  } catch (const Error& e) {
    o.success = false;
    o.failure = "error:" + std::string(to_string(e.code()));
  }
  return o;
}

// --- metrics ------------------------------------------------------------------------

struct Tally {
  std::int64_t trials = 0;
  std::int64_t successes = 0;

  double rate() const { return trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0; }
  std::string fraction() const { return std::to_string(successes) + "/" + std::to_string(trials); }
};

inline Json to_json(const Tally& t) {
  return {{"trials", t.trials}, {"successes", t.successes}, {"fraction", t.fraction()}, {"rate", t.rate()}};
}

struct Condition {
  std::string label;
  std::vector<SampleOutcome> outcomes;

  Tally tally() const {
    Tally t;
    for (const auto& o : outcomes) {
      ++t.trials;
      t.successes += o.success ? 1 : 0;
    }
    return t;
  }

  Tally tally_if(const std::function<bool(const SampleOutcome&)>& keep) const {
    Tally t;
    for (const auto& o : outcomes) {
      if (!keep(o)) continue;
      ++t.trials;
      t.successes += o.success ? 1 : 0;
    }
    return t;
  }
};

namespace detail {

inline Json error_stats(const std::vector<SampleOutcome>& outcomes, std::optional<double> SampleOutcome::*member) {
  std::vector<double> v;
  for (const auto& o : outcomes)
    if ((o.*member).has_value()) v.push_back(*(o.*member));
  if (v.empty()) return {{"count", 0}, {"mean", nullptr}, {"median", nullptr}};
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const std::size_t n = v.size();
  const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return {{"count", n}, {"mean", sum / static_cast<double>(n)}, {"median", median}};
}

}  // namespace detail

inline Json condition_summary(const Condition& c) {
  Json per_kind = Json::object();
  Json per_split = Json::object();
  std::map<std::string, Tally> kinds, splits;
  std::map<std::string, int> failures;
  for (const auto& o : c.outcomes) {
    auto& k = kinds[std::string(to_string(o.kind))];
    auto& s = splits[std::string(to_string(o.split))];
    ++k.trials;
    ++s.trials;
    k.successes += o.success;
    s.successes += o.success;
    if (!o.success) ++failures[o.failure.empty() ? "below_threshold" : o.failure];
  }
  for (const auto& [name, t] : kinds) per_kind[name] = to_json(t);
  for (const auto& [name, t] : splits) per_split[name] = to_json(t);
  return {{"label", c.label},
          {"overall", to_json(c.tally())},
          {"per_kind", per_kind},
          {"per_split", per_split},
          {"failures", failures},
          {"angular_error_deg",
           {{"z", detail::error_stats(c.outcomes, &SampleOutcome::err_z)},
            {"y", detail::error_stats(c.outcomes, &SampleOutcome::err_y)},
            {"m", detail::error_stats(c.outcomes, &SampleOutcome::err_m)}}}};
}

/// Summary plus the raw outcomes it was computed from.
struct MetricsReport {
  std::string name;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::string dataset_fingerprint;
  std::vector<Condition> conditions;
  /// Training curves by model label, when the report trained models.
  std::map<std::string, std::vector<double>> loss_curves;

  const Condition& condition(const std::string& label) const {
    for (const auto& c : conditions)
      if (c.label == label) return c;
    throw Error(ErrorCode::not_found, "no condition labelled " + label);
  }

  Json to_json() const {
    Json summary = Json::array();
    Json raw = Json::array();
    for (const auto& c : conditions) {
      summary.push_back(condition_summary(c));
      Json outs = Json::array();
      for (const auto& o : c.outcomes) outs.push_back(crayon::to_json(o));
      raw.push_back({{"label", c.label}, {"outcomes", outs}});
    }
    return {{"report", name},
            {"seed", seed},
            {"config_fingerprint", config_fingerprint},
            {"dataset_fingerprint", dataset_fingerprint},
            {"summary", summary},
            {"loss_curves", loss_curves},
            {"raw", raw}};
  }

  /// Rebuilds a report from the identity fields and raw outcomes of `j`;
  /// the summary is recomputed, never read.
  static MetricsReport from_raw(const Json& j) {
    MetricsReport r;
    r.name = j.at("report").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
    r.loss_curves = j.at("loss_curves").get<std::map<std::string, std::vector<double>>>();
    for (const auto& c : j.at("raw")) {
      Condition cond;
      cond.label = c.at("label").get<std::string>();
      for (const auto& o : c.at("outcomes")) cond.outcomes.push_back(sample_outcome_from_json(o));
      r.conditions.push_back(std::move(cond));
    }
    return r;
  }
};

inline Condition run_condition(const std::vector<const DatasetRecord*>& records, const PromptSource& src,
                               const EvalContext& ctx, std::string label = {}) {
  Condition c;
  c.label = label.empty() ? src.label() : std::move(label);
  c.outcomes.resize(records.size());
  detail::parallel_for(records.size(), ctx.threads,
                       [&](std::size_t i) { c.outcomes[i] = evaluate_record(*records[i], src, ctx); });
  return c;
}

inline MetricsReport make_report(std::string name, const ExperimentConfig& cfg, const Dataset& d) {
  MetricsReport r;
  r.name = std::move(name);
  r.seed = cfg.seed;
  r.config_fingerprint = cfg.fingerprint();
  r.dataset_fingerprint = d.fingerprint();
  return r;
}

inline MetricsReport run_eval(const Dataset& d, const std::vector<const DatasetRecord*>& records,
                              const PromptSource& src, const ExperimentConfig& cfg, const EvalContext& ctx) {
  MetricsReport r = make_report("eval/" + std::string(to_string(ctx.predictor)), cfg, d);
  r.conditions.push_back(run_condition(records, src, ctx));
  return r;
}

inline MetricsReport run_noise_sweep(const Dataset& d, const ExperimentConfig& cfg, const EvalContext& ctx) {
  MetricsReport r = make_report("sweep-noise/" + std::string(to_string(ctx.predictor)), cfg, d);
  const auto test = d.test();
  for (double f : cfg.noise_fractions) {
    PromptSource src;
    src.kind = PromptSourceKind::perturbed;
    src.fraction = f;
    r.conditions.push_back(run_condition(test, src, ctx));
  }
  return r;
}

inline MetricsReport run_prompt_ablation(const Dataset& d, const ExperimentConfig& cfg, const EvalContext& ctx) {
  MetricsReport r = make_report("sweep-prompts/" + std::string(to_string(ctx.predictor)), cfg, d);
  const auto test = d.test();
  for (auto p : kAllPatterns) {
    PromptSource src;
    src.pattern = p;
    r.conditions.push_back(run_condition(test, src, ctx, std::string(to_string(p))));
  }
  return r;
}

/// Toy training samples from the train split.
inline std::vector<ToySample> toy_samples(const Dataset& d) {
  std::vector<ToySample> out;
  for (const DatasetRecord* r : d.split(Split::train)) {
    const Scene s = materialize(r->scene);
    const RenderResult f = render(s, r->intrinsics, r->extrinsics);
    out.push_back(make_toy_sample(r->gt, r->prompt.prompt, f.depth, r->intrinsics, r->extrinsics));
  }
  return out;
}

inline const std::array<std::pair<const char*, LossWeights>, 3>& loss_ablation_variants() {
  static const std::array<std::pair<const char*, LossWeights>, 3> v{
      {{"L_T", {1.0, 0.0, 0.0}}, {"L_T+L_O", {1.0, 1.0, 0.0}}, {"L_T+L_O+L_P", {1.0, 1.0, 1.0}}}};
  return v;
}

/// Trains one toy model per loss variant and evaluates each with exact prompts.
inline MetricsReport run_loss_ablation(const Dataset& d, const ExperimentConfig& cfg, EvalContext ctx,
                                       std::vector<ToyModelParams>* models = nullptr) {
  MetricsReport r = make_report("sweep-losses", cfg, d);
  const auto samples = toy_samples(d);
  const auto test = d.test();
  for (const auto& [label, w] : loss_ablation_variants()) {
    ToyConfig tc = cfg.toy;
    tc.weights = w;
    ToyModelParams params = train_toy_model(samples, tc);
    ctx.predictor = PredictorChoice::toy;
    ctx.toy = &params;
    r.conditions.push_back(run_condition(test, PromptSource{}, ctx, label));
    r.loss_curves[label] = params.training_curve;
    if (models) models->push_back(std::move(params));
  }
  return r;
}

// --- long horizon ---------------------------------------------------------------------

/// Pull-then-push on fresh scenes, each key-frame prompted from the ground
/// truth of the scene as it stands before that step.
inline MetricsReport run_longhorizon(const ExperimentConfig& cfg, const EvalContext& ctx, const Dataset* d = nullptr) {
  MetricsReport r;
  r.name = "longhorizon/" + std::string(to_string(ctx.predictor));
  r.seed = cfg.seed;
  r.config_fingerprint = cfg.fingerprint();
  r.dataset_fingerprint = d ? d->fingerprint() : "";
  Condition c;
  c.label = "pull-then-push";
  c.outcomes.resize(static_cast<std::size_t>(cfg.longhorizon_count));
  detail::parallel_for(c.outcomes.size(), ctx.threads, [&](std::size_t i) {
    SampleOutcome& o = c.outcomes[i];
    char id[32];
    std::snprintf(id, sizeof id, "longhorizon-%05zu", i);
    o.id = id;
    o.kind = cfg.longhorizon_kinds[i % cfg.longhorizon_kinds.size()];
    o.split = Split::test_seen;
    // Find a scene whose first key-frame can be prompted.
    std::optional<DatasetRecord> first;
    for (int attempt = 0; attempt < cfg.max_scene_retries && !first; ++attempt)
      first = collect_record(o.kind, detail::mix_seed(cfg.seed, std::string("longhorizon#") + id, attempt), cfg);
    if (!first) {
      o.failure = "error:no_graspable_region";
      return;
    }
    Scene scene = materialize(first->scene);
    KeyFramePlan plan;
    plan.steps.push_back({first->prompt.prompt, PrimitiveKind::pull, MotionSense::open});
    plan.steps.push_back({first->prompt.prompt, PrimitiveKind::push, MotionSense::close});
    std::vector<GroundTruthAction> truths{first->gt};
    PlanContext pc;
    pc.intrinsics = first->intrinsics;
    pc.extrinsics = first->extrinsics;
    pc.execution = ctx.execution;
    pc.planner = ctx.planner;
    pc.refresh = [&](const Scene& now, std::size_t step) {
      if (step == 0) return first->prompt.prompt;
      Rng rng(detail::mix_seed(cfg.seed, std::string("longhorizon-step#") + id, step));
      const GroundTruthAction gt =
          collect_ground_truth(now, pc.intrinsics, pc.extrinsics, rng, plan.steps[step].sense);
      truths.push_back(gt);
      return derive_2d_prompts(gt, pc.intrinsics, pc.extrinsics).prompt;
    };
    std::unique_ptr<Predictor> predictor;
    switch (ctx.predictor) {
      case PredictorChoice::solver: predictor = std::make_unique<SolverPredictor>(); break;
      case PredictorChoice::toy:
        if (!ctx.toy) throw Error(ErrorCode::invalid_argument, "toy predictor needs a trained model");
        predictor = std::make_unique<ToyPredictor>(*ctx.toy);
        break;
      case PredictorChoice::gt:
        predictor = std::make_unique<GroundTruthPredictor>(
            [&](const CrayonPrompt&, const Observation&) { return truths.back(); });
        break;
    }
    try {
      const PlanResult res = execute_plan(scene, plan, *predictor, pc);
      o.success = res.success;
      o.displacement = res.steps.back().execution.part_displacement;
      if (!res.success) {
        const auto& failed = res.steps.back().execution;
        o.failure = "step" + std::to_string(res.steps.size() - 1) + ":" +
                    (failed.failure_reason ? std::string(to_string(*failed.failure_reason)) : "below_threshold");
      }
    } catch (const Error& e) {
      o.success = false;
      o.failure = "error:" + std::string(to_string(e.code()));
    }
  });
  r.conditions.push_back(std::move(c));
  return r;
}

}  // namespace crayon
