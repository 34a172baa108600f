#pragma once

#include "crayon/action.hpp"
#include "crayon/camera.hpp"
#include "crayon/core.hpp"
#include "crayon/prompt.hpp"
#include "crayon/scene.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace crayon {

using Json = nlohmann::json;

// --- small vectors ------------------------------------------------------------

inline Json to_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }
inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Json to_json(const Mat3& m) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(Json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

namespace detail {

inline bool number_array(const Json& j, std::size_t n) {
  if (!j.is_array() || j.size() != n) return false;
  for (const auto& x : j)
    if (!x.is_number()) return false;
  return true;
}

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::validation, std::string("missing field: ") + key);
  return j.at(key);
}

}  // namespace detail

inline Vec2 vec2_from_json(const Json& j) {
  if (!detail::number_array(j, 2)) throw Error(ErrorCode::validation, "expected an array of two numbers");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Vec3 vec3_from_json(const Json& j) {
  if (!detail::number_array(j, 3)) throw Error(ErrorCode::validation, "expected an array of three numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Mat3 mat3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::validation, "expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3_from_json(j[static_cast<std::size_t>(r)]).transpose();
  return m;
}

// --- camera -------------------------------------------------------------------

inline Json to_json(const CameraIntrinsics& k) {
  return {{"focal_x", k.focal_x}, {"focal_y", k.focal_y}, {"principal_x", k.principal_x},
          {"principal_y", k.principal_y}, {"width", k.width}, {"height", k.height}};
}

inline CameraIntrinsics intrinsics_from_json(const Json& j) {
  CameraIntrinsics k;
  k.focal_x = detail::field(j, "focal_x").get<double>();
  k.focal_y = detail::field(j, "focal_y").get<double>();
  k.principal_x = detail::field(j, "principal_x").get<double>();
  k.principal_y = detail::field(j, "principal_y").get<double>();
  k.width = detail::field(j, "width").get<int>();
  k.height = detail::field(j, "height").get<int>();
  k.validate();
  return k;
}

inline Json to_json(const CameraExtrinsics& e) {
  return {{"rotation", to_json(e.rotation)}, {"translation", to_json(e.translation)}};
}

inline CameraExtrinsics extrinsics_from_json(const Json& j) {
  CameraExtrinsics e;
  e.rotation = mat3_from_json(detail::field(j, "rotation"));
  e.translation = vec3_from_json(detail::field(j, "translation"));
  e.validate();
  return e;
}

inline Json camera_json(const CameraIntrinsics& k, const CameraExtrinsics& e) {
  return {{"intrinsics", to_json(k)}, {"extrinsics", to_json(e)}};
}

/// Stable reference for a camera: hash of its serialized parameters.
inline std::string camera_ref(const CameraIntrinsics& k, const CameraExtrinsics& e) {
  return hex64(fnv1a(camera_json(k, e).dump()));
}

// --- scene --------------------------------------------------------------------

/// A scene is fully determined by kind, seed and joint state.
struct SceneRef {
  SceneKind kind = SceneKind::drawer;
  std::uint64_t seed = 0;
  double joint_state = 0.0;

  bool operator==(const SceneRef&) const = default;
};

inline SceneRef scene_ref(const Scene& s) { return {s.kind, s.seed, s.joint.state}; }

inline Json to_json(const SceneRef& r) {
  return {{"kind", std::string(to_string(r.kind))}, {"seed", r.seed}, {"joint_state", r.joint_state}};
}

inline SceneRef scene_ref_from_json(const Json& j) {
  SceneRef r;
  r.kind = scene_kind_from_string(detail::field(j, "kind").get<std::string>());
  r.seed = detail::field(j, "seed").get<std::uint64_t>();
  r.joint_state = detail::field(j, "joint_state").get<double>();
  return r;
}

inline Scene materialize(const SceneRef& r) {
  Scene s = build_scene(r.kind, r.seed);
  s.set_state(r.joint_state);
  return s;
}

/// Full scene description: kind, seed and joint parameters.
inline Json to_json(const Scene& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"seed", s.seed},
          {"joint",
           {{"type", s.joint.kind == JointKind::prismatic ? "prismatic" : "revolute"},
            {"axis", to_json(s.joint.axis)},
            {"pivot", to_json(s.joint.pivot)},
            {"lower", s.joint.lower},
            {"upper", s.joint.upper},
            {"state", s.joint.state}}}};
}

/// Rebuilds from kind and seed and checks the stored joint agrees.
inline Scene scene_from_json(const Json& j) {
  SceneRef r;
  r.kind = scene_kind_from_string(detail::field(j, "kind").get<std::string>());
  r.seed = detail::field(j, "seed").get<std::uint64_t>();
  r.joint_state = detail::field(detail::field(j, "joint"), "state").get<double>();
  Scene s = materialize(r);
  if (to_json(s) != j) throw Error(ErrorCode::hash_mismatch, "scene description does not match its seed");
  return s;
}

// --- prompts ------------------------------------------------------------------

/// Interchange unit between CLI, service and UI.
struct PromptRecord {
  CrayonPrompt prompt;
  SceneRef scene;
  std::string camera;

  bool operator==(const PromptRecord&) const = default;
};

inline Json to_json(const CrayonPrompt& p) {
  Json j{{"contact_px", to_json(p.contact_px)}, {"pattern", std::string(to_string(p.pattern))}};
  if (p.z_dir) j["z_dir"] = to_json(*p.z_dir);
  if (p.y_dir) j["y_dir"] = to_json(*p.y_dir);
  if (p.move_dir) j["move_dir"] = to_json(*p.move_dir);
  return j;
}

inline Json to_json(const PromptRecord& r) {
  Json j = to_json(r.prompt);
  j["scene"] = to_json(r.scene);
  j["camera"] = r.camera;
  return j;
}

/// Strict parse; throws a validation error naming every offending field.
inline CrayonPrompt prompt_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::validation, "prompt must be an object");
  std::vector<std::string> bad;
  CrayonPrompt p;
  try {
    p.contact_px = vec2_from_json(detail::field(j, "contact_px"));
  } catch (const Error&) {
    bad.emplace_back("contact_px");
  }
  bool pattern_ok = true;
  try {
    p.pattern = pattern_from_string(detail::field(j, "pattern").get<std::string>());
  } catch (const std::exception&) {
    bad.emplace_back("pattern");
    pattern_ok = false;
  }
  const auto dir = [&](const char* key, std::optional<Vec2>& out) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    try {
      out = vec2_from_json(j.at(key));
    } catch (const Error&) {
      bad.emplace_back(key);
    }
  };
  dir("z_dir", p.z_dir);
  dir("y_dir", p.y_dir);
  dir("move_dir", p.move_dir);
  if (pattern_ok && bad.empty()) {
    for (auto& v : p.violations())
      if (std::find(bad.begin(), bad.end(), v) == bad.end()) bad.push_back(v);
  }
  if (!bad.empty()) {
    std::string msg = "invalid prompt fields:";
    for (const auto& b : bad) msg += " " + b;
    throw Error(ErrorCode::validation, msg);
  }
  return p;
}

inline PromptRecord prompt_record_from_json(const Json& j) {
  PromptRecord r;
  r.prompt = prompt_from_json(j);
  try {
    r.scene = scene_ref_from_json(detail::field(j, "scene"));
    r.camera = detail::field(j, "camera").get<std::string>();
  } catch (const Error& e) {
    throw Error(ErrorCode::validation, std::string("invalid prompt record: ") + e.what());
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::validation, std::string("invalid prompt record: ") + e.what());
  }
  return r;
}

// --- actions and results -------------------------------------------------------

inline Json to_json(const GroundTruthAction& a) {
  Json j{{"contact_point", to_json(a.contact_point)},
         {"z_axis", to_json(a.z_axis)},
         {"y_axis", to_json(a.y_axis)},
         {"part_id", a.part_id}};
  j["move_dir"] = a.move_dir ? to_json(*a.move_dir) : Json(nullptr);
  return j;
}

inline GroundTruthAction ground_truth_from_json(const Json& j) {
  GroundTruthAction a;
  a.contact_point = vec3_from_json(detail::field(j, "contact_point"));
  a.z_axis = vec3_from_json(detail::field(j, "z_axis"));
  a.y_axis = vec3_from_json(detail::field(j, "y_axis"));
  if (!detail::field(j, "move_dir").is_null()) a.move_dir = vec3_from_json(j.at("move_dir"));
  a.part_id = detail::field(j, "part_id").get<int>();
  return a;
}

inline Json to_json(const PredictedAction& a) {
  Json j{{"contact_px_pred", to_json(a.contact_px_pred)},
         {"contact_3d", to_json(a.contact_3d)},
         {"z_axis", to_json(a.z_axis)},
         {"y_axis", to_json(a.y_axis)},
         {"move_from_prior", a.move_from_prior},
         {"provenance", std::string(to_string(a.provenance))}};
  j["move_dir"] = a.move_dir ? to_json(*a.move_dir) : Json(nullptr);
  return j;
}

inline Provenance provenance_from_string(std::string_view s) {
  for (auto p : {Provenance::solver, Provenance::toy_model, Provenance::ground_truth})
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::validation, "unknown provenance: " + std::string(s));
}

inline PredictedAction predicted_from_json(const Json& j) {
  PredictedAction a;
  a.contact_px_pred = vec2_from_json(detail::field(j, "contact_px_pred"));
  a.contact_3d = vec3_from_json(detail::field(j, "contact_3d"));
  a.z_axis = vec3_from_json(detail::field(j, "z_axis"));
  a.y_axis = vec3_from_json(detail::field(j, "y_axis"));
  if (!detail::field(j, "move_dir").is_null()) a.move_dir = vec3_from_json(j.at("move_dir"));
  a.move_from_prior = detail::field(j, "move_from_prior").get<bool>();
  a.provenance = provenance_from_string(detail::field(j, "provenance").get<std::string>());
  return a;
}

inline Json to_json(const GripperState& g) {
  Json j{{"rotation", to_json(g.rotation)},
         {"position", to_json(g.position)},
         {"aperture", g.aperture == Aperture::open ? "open" : "closed"}};
  j["attached"] = g.attached ? to_json(*g.attached) : Json(nullptr);
  return j;
}

inline Json to_json(const ExecutionResult& r) {
  Json traj = Json::array();
  for (const auto& g : r.trajectory) traj.push_back(to_json(g));
  Json j{{"success", r.success},
         {"part_displacement", r.part_displacement},
         {"contact_established", r.contact_established},
         {"trajectory", traj}};
  j["failure_reason"] = r.failure_reason ? Json(std::string(to_string(*r.failure_reason))) : Json(nullptr);
  return j;
}

}  // namespace crayon
