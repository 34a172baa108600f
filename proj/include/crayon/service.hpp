#pragma once

#include "crayon/auto_prompter.hpp"
#include "crayon/eval.hpp"
#include "crayon/planner.hpp"
#include "crayon/predictor.hpp"
#include "crayon/records.hpp"
#include "crayon/toy_model.hpp"

#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace crayon {

struct ServiceConfig {
  CameraIntrinsics intrinsics;
  CameraSamplingConfig camera;
  PlannerParams planner;
  ExecutionParams execution;
  PredictorChoice predictor = PredictorChoice::solver;
  /// Fingerprint of the loaded toy model, when the predictor is toy.
  std::string toy_fingerprint;

  Json to_json() const {
    return {{"intrinsics", crayon::to_json(intrinsics)},
            {"camera",
             {{"distance", {camera.distance_range.first, camera.distance_range.second}},
              {"azimuth_deg", {camera.azimuth_deg.first, camera.azimuth_deg.second}},
              {"altitude_deg", {camera.altitude_deg.first, camera.altitude_deg.second}}}},
            {"planner",
             {{"pre_distance", planner.pre_distance},
              {"post_steps", planner.post_steps},
              {"move_fraction", planner.move_fraction}}},
            {"predictor", std::string(crayon::to_string(predictor))},
            {"toy_fingerprint", toy_fingerprint}};
  }

  std::string fingerprint() const { return hex64(fnv1a(to_json().dump())); }

  /// Fingerprint of what replay depends on; the predictor is not part of it.
  std::string execution_fingerprint() const {
    Json j = to_json();
    j.erase("predictor");
    j.erase("toy_fingerprint");
    return hex64(fnv1a(j.dump()));
  }
};

/// Scene and camera a session starts from; the CLI uses the same function.
inline std::pair<Scene, CameraExtrinsics> session_start(SceneKind kind, std::uint64_t seed,
                                                        const ServiceConfig& cfg) {
  Scene scene = build_scene(kind, seed);
  Rng rng(detail::mix_seed(seed, "session-camera", 0));
  const CameraExtrinsics e = sample_camera_pose(rng, cfg.camera, scene.target());
  return {std::move(scene), e};
}

struct HistoryEntry {
  PromptRecord record;
  PrimitiveKind primitive = PrimitiveKind::pull;
  MotionSense sense = MotionSense::open;
  PredictedAction action;
  ExecutionResult result;
  bool success = false;
};

struct History {
  SceneKind kind = SceneKind::drawer;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::string execution_fingerprint;
  std::vector<HistoryEntry> steps;
  /// Joint state after the last step, for replay checks.
  double final_joint_state = 0.0;
};

inline Json to_json(const HistoryEntry& h) {
  return {{"prompt", to_json(h.record)},
          {"primitive", std::string(to_string(h.primitive))},
          {"sense", std::string(to_string(h.sense))},
          {"action", to_json(h.action)},
          {"result", to_json(h.result)},
          {"success", h.success}};
}

inline Json to_json(const History& h) {
  Json steps = Json::array();
  for (const auto& s : h.steps) steps.push_back(to_json(s));
  return {{"kind", std::string(to_string(h.kind))},
          {"seed", h.seed},
          {"config_fingerprint", h.config_fingerprint},
          {"execution_fingerprint", h.execution_fingerprint},
          {"steps", steps},
          {"final_joint_state", h.final_joint_state}};
}

/// Parses a history; execution results are not read back, replay recomputes them.
inline History history_from_json(const Json& j) {
  try {
    History h;
    h.kind = scene_kind_from_string(detail::field(j, "kind").get<std::string>());
    h.seed = detail::field(j, "seed").get<std::uint64_t>();
    h.config_fingerprint = detail::field(j, "config_fingerprint").get<std::string>();
    h.execution_fingerprint = detail::field(j, "execution_fingerprint").get<std::string>();
    h.final_joint_state = detail::field(j, "final_joint_state").get<double>();
    for (const auto& s : detail::field(j, "steps")) {
      HistoryEntry e;
      e.record = prompt_record_from_json(detail::field(s, "prompt"));
      e.primitive = primitive_from_string(detail::field(s, "primitive").get<std::string>());
      e.sense = motion_sense_from_string(detail::field(s, "sense").get<std::string>());
      e.action = predicted_from_json(detail::field(s, "action"));
      e.success = detail::field(s, "success").get<bool>();
      h.steps.push_back(std::move(e));
    }
    return h;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed history: ") + e.what());
  }
}

/// Executes one previewed key-frame; shared by sessions and replay.
inline std::pair<ExecutionResult, bool> execute_key_frame(Scene& scene, const PredictedAction& action,
                                                          PrimitiveKind primitive, MotionSense sense,
                                                          const ServiceConfig& cfg) {
  ExecutionParams ep = cfg.execution;
  ep.sense = sense;
  ep.pre_distance = cfg.planner.pre_distance;
  ep.move_fraction = cfg.planner.move_fraction;
  ep.move_steps = cfg.planner.post_steps;
  const bool moves = requires_move_prompt(primitive);
  ep.move_after_contact = moves;
  ExecutionResult r = execute(scene, action.contact_action(), ep);
  const bool ok = moves ? r.success : r.contact_established;
  return {std::move(r), ok};
}

/// Re-executes the stored actions from the seed; returns the final scene.
inline Scene replay_history(const History& h, const ServiceConfig& cfg) {
  if (!h.execution_fingerprint.empty() && h.execution_fingerprint != cfg.execution_fingerprint())
    throw Error(ErrorCode::hash_mismatch, "history was recorded under a different configuration");
  Scene scene = session_start(h.kind, h.seed, cfg).first;
  for (const auto& s : h.steps) execute_key_frame(scene, s.action, s.primitive, s.sense, cfg);
  return scene;
}

struct Frame {
  RenderResult render;
  SceneRef scene;
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
  std::size_t key_frame = 0;
};

struct Preview {
  PromptRecord record;
  PrimitiveKind primitive = PrimitiveKind::pull;
  MotionSense sense = MotionSense::open;
  PredictedAction action;
  std::vector<Waypoint> waypoints;
};

struct StepOutcome {
  HistoryEntry entry;
  Frame next;
};

/// Hands out turns in arrival order so requests within a session never reorder.
class ArrivalQueue {
 public:
  class Turn {
   public:
    explicit Turn(ArrivalQueue& q) : q_(q) {
      std::unique_lock lock(q_.m_);
      ticket_ = q_.next_++;
      q_.cv_.wait(lock, [&] { return q_.serving_ == ticket_; });
    }
    ~Turn() {
      {
        std::lock_guard lock(q_.m_);
        ++q_.serving_;
      }
      q_.cv_.notify_all();
    }
    Turn(const Turn&) = delete;
    Turn& operator=(const Turn&) = delete;

   private:
    ArrivalQueue& q_;
    std::uint64_t ticket_ = 0;
  };

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::uint64_t next_ = 0;
  std::uint64_t serving_ = 0;
};

class Service {
 public:
  explicit Service(ServiceConfig cfg, std::shared_ptr<const ToyModelParams> toy = nullptr)
      : cfg_(std::move(cfg)), toy_(std::move(toy)) {
    cfg_.intrinsics.validate();
    cfg_.camera.validate();
    if (cfg_.predictor == PredictorChoice::toy) {
      if (!toy_) throw Error(ErrorCode::invalid_argument, "toy predictor needs a trained model");
      cfg_.toy_fingerprint = toy_->config.fingerprint();
    }
    if (cfg_.predictor == PredictorChoice::gt)
      throw Error(ErrorCode::invalid_argument, "the service predicts from prompts; use solver or toy");
    fingerprint_ = cfg_.fingerprint();
    if (toy_ && cfg_.predictor == PredictorChoice::toy) predictor_ = std::make_unique<ToyPredictor>(*toy_);
    else predictor_ = std::make_unique<SolverPredictor>();
  }

  const ServiceConfig& config() const { return cfg_; }
  const std::string& fingerprint() const { return fingerprint_; }

  std::string create_session(SceneKind kind, std::uint64_t seed) {
    auto s = std::make_shared<Session>();
    s->history.kind = kind;
    s->history.seed = seed;
    s->history.config_fingerprint = fingerprint_;
    s->history.execution_fingerprint = cfg_.execution_fingerprint();
    auto [scene, e] = session_start(kind, seed, cfg_);
    s->scene = std::move(scene);
    s->extrinsics = e;
    s->history.final_joint_state = s->scene.joint.state;
    std::lock_guard lock(m_);
    char id[32];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(++counter_));
    sessions_[id] = s;
    return id;
  }

  Frame frame(const std::string& id) {
    auto s = session(id);
    ArrivalQueue::Turn turn(s->queue);
    return make_frame(*s);
  }

  /// Predicts and plans without touching the scene; replaces any pending preview.
  Preview submit_prompt(const std::string& id, const PromptRecord& record, PrimitiveKind primitive,
                        MotionSense sense) {
    auto s = session(id);
    ArrivalQueue::Turn turn(s->queue);
    if (primitive == PrimitiveKind::rotate)
      throw Error(ErrorCode::invalid_argument, "rotate spans two key-frames; run it through a key-frame plan");
    std::vector<std::string> bad;
    if (record.scene != scene_ref(s->scene)) bad.emplace_back("scene");
    if (record.camera != camera_ref(cfg_.intrinsics, s->extrinsics)) bad.emplace_back("camera");
    if (requires_move_prompt(primitive) && !record.prompt.move_dir) bad.emplace_back("move_dir");
    if (!bad.empty()) {
      std::string msg = "invalid prompt fields:";
      for (const auto& b : bad) msg += " " + b;
      throw Error(ErrorCode::validation, msg);
    }
    const RenderResult f = render(s->scene, cfg_.intrinsics, s->extrinsics);
    Observation obs{cfg_.intrinsics, s->extrinsics, &f.depth, scene_motion_hint(s->scene)};
    Preview p;
    p.record = record;
    p.primitive = primitive;
    p.sense = sense;
    p.action = predictor().predict(record.prompt, obs);
    if (requires_move_prompt(primitive) && !p.action.move_dir)
      throw Error(ErrorCode::invalid_state, "prediction has no moving direction");
    p.waypoints = plan_step(p.action, primitive, move_distance(s->scene, p.action.contact_3d, cfg_.planner),
                            cfg_.planner);
    s->pending = p;
    return p;
  }

  /// Executes the pending preview; a failed execution still advances history.
  StepOutcome execute(const std::string& id) {
    auto s = session(id);
    ArrivalQueue::Turn turn(s->queue);
    if (!s->pending) throw Error(ErrorCode::invalid_state, "no pending action; submit a prompt first");
    const Preview p = std::move(*s->pending);
    s->pending.reset();
    auto [result, ok] = execute_key_frame(s->scene, p.action, p.primitive, p.sense, cfg_);
    HistoryEntry h{p.record, p.primitive, p.sense, p.action, std::move(result), ok};
    s->history.steps.push_back(h);
    s->history.final_joint_state = s->scene.joint.state;
    return {std::move(h), make_frame(*s)};
  }

  History history(const std::string& id) {
    auto s = session(id);
    ArrivalQueue::Turn turn(s->queue);
    return s->history;
  }

  /// Answers an external-selector request with the heuristic selector.
  SelectorChoice select(const SelectorRequest& req) const {
    if (!req.scene || !req.camera)
      throw Error(ErrorCode::validation, "heuristic selection needs scene and camera in the request");
    const Scene scene = materialize(*req.scene);
    const auto& [k, e] = *req.camera;
    const RenderResult f = render(scene, k, e);
    HeuristicContext hc;
    hc.scene = &scene;
    hc.intrinsics = k;
    hc.extrinsics = e;
    hc.sense = req.task == "push" ? MotionSense::close : MotionSense::open;
    return select_heuristic(sample_candidates(req.center), f, hc, req.want_move);
  }

 private:
  struct Session {
    Scene scene;
    CameraExtrinsics extrinsics;
    std::optional<Preview> pending;
    History history;
    ArrivalQueue queue;
  };

  std::shared_ptr<Session> session(const std::string& id) {
    std::lock_guard lock(m_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::not_found, "no session " + id);
    return it->second;
  }

  Frame make_frame(const Session& s) const {
    return {render(s.scene, cfg_.intrinsics, s.extrinsics), scene_ref(s.scene), cfg_.intrinsics, s.extrinsics,
            s.history.steps.size()};
  }

  const Predictor& predictor() const { return *predictor_; }

  ServiceConfig cfg_;
  std::shared_ptr<const ToyModelParams> toy_;
  std::string fingerprint_;
  std::unique_ptr<const Predictor> predictor_;
  std::mutex m_;
  std::uint64_t counter_ = 0;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

// --- json layer -----------------------------------------------------------------------

inline Json to_json(const Frame& f) {
  return {{"key_frame", f.key_frame},
          {"scene", to_json(f.scene)},
          {"camera", camera_ref(f.intrinsics, f.extrinsics)},
          {"camera_params", camera_json(f.intrinsics, f.extrinsics)},
          {"width", f.render.rgb.width},
          {"height", f.render.rgb.height},
          {"rgb_ppm_base64", detail::base64_encode(encode_ppm(f.render.rgb))},
          {"depth_base64", detail::base64_encode(encode_depth(f.render.depth))}};
}

inline Json to_json(const Preview& p) {
  Json wps = Json::array();
  for (const auto& w : p.waypoints) wps.push_back(to_json(w));
  return {{"prompt", to_json(p.record)},
          {"primitive", std::string(to_string(p.primitive))},
          {"sense", std::string(to_string(p.sense))},
          {"action", to_json(p.action)},
          {"waypoints", wps}};
}

inline Json to_json(const StepOutcome& o) { return {{"step", to_json(o.entry)}, {"frame", to_json(o.next)}}; }

/// Machine-readable error body.
inline Json error_json(const Error& e) {
  return {{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}}};
}

}  // namespace crayon
