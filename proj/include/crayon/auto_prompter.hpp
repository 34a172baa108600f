#pragma once

#include "crayon/camera.hpp"
#include "crayon/core.hpp"
#include "crayon/predictor.hpp"
#include "crayon/prompt.hpp"
#include "crayon/records.hpp"
#include "crayon/scene.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <tuple>

namespace crayon {

inline constexpr int kCandidateCount = 32;
inline constexpr double kCandidateSpacingDeg = 360.0 / kCandidateCount;

/// Center of the movable part's 2D bounding box in a rendered label map.
inline Vec2 detect_contact(const RenderResult& frame) {
  int x0 = std::numeric_limits<int>::max(), y0 = x0, x1 = -1, y1 = -1;
  for (int y = 0; y < frame.rgb.height; ++y) {
    for (int x = 0; x < frame.rgb.width; ++x) {
      if (frame.label(x, y) != kPartBody) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw Error(ErrorCode::not_found, "movable part is not visible");
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1)};
}

inline Vec2 detect_contact(const Scene& scene, const CameraIntrinsics& k, const CameraExtrinsics& e) {
  return detect_contact(render(scene, k, e));
}

struct CandidateSet {
  Vec2 center = Vec2::Zero();
  std::array<Vec2, kCandidateCount> dirs;

  double angle_deg(int i) const { return kCandidateSpacingDeg * i; }
};

/// Directions at 2*pi*k/32 from the image +x axis (image y points down).
inline CandidateSet sample_candidates(const Vec2& center) {
  CandidateSet c;
  c.center = center;
  for (int i = 0; i < kCandidateCount; ++i) {
    // Quarter turns are written exactly.
    switch (i) {
      case 0: c.dirs[0] = {1.0, 0.0}; continue;
      case 8: c.dirs[8] = {0.0, 1.0}; continue;
      case 16: c.dirs[16] = {-1.0, 0.0}; continue;
      case 24: c.dirs[24] = {0.0, -1.0}; continue;
      default: break;
    }
    const double a = 2.0 * kPi * i / kCandidateCount;
    c.dirs[static_cast<std::size_t>(i)] = {std::cos(a), std::sin(a)};
  }
  return c;
}

struct SelectorChoice {
  int z = 0;
  int y = 0;
  std::optional<int> m;

  void validate() const {
    const auto in_range = [](int i) { return i >= 0 && i < kCandidateCount; };
    if (!in_range(z) || !in_range(y) || (m && !in_range(*m)))
      throw Error(ErrorCode::selector, "candidate index out of range");
    if (z == y) throw Error(ErrorCode::selector, "z and y must select different candidates");
  }

  bool operator==(const SelectorChoice&) const = default;
};

inline double angle_between_2d(const Vec2& a, const Vec2& b) {
  return rad_to_deg(std::atan2(std::abs(cross2(a, b)), a.dot(b)));
}

/// Candidate indices sorted by angle to `target`, nearest first.
inline std::array<int, kCandidateCount> rank_candidates(const CandidateSet& c, const Vec2& target) {
  std::array<int, kCandidateCount> idx;
  for (int i = 0; i < kCandidateCount; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return angle_between_2d(c.dirs[static_cast<std::size_t>(a)], target) <
           angle_between_2d(c.dirs[static_cast<std::size_t>(b)], target);
  });
  return idx;
}

namespace detail {

/// Nearest z and y; on a clash the one that loses less moves to its runner-up.
inline std::pair<int, int> pick_zy(const CandidateSet& c, const Vec2& z_target, const Vec2& y_target) {
  const auto rz = rank_candidates(c, z_target);
  const auto ry = rank_candidates(c, y_target);
  if (rz[0] != ry[0]) return {rz[0], ry[0]};
  const auto err = [&](int i, const Vec2& t) { return angle_between_2d(c.dirs[static_cast<std::size_t>(i)], t); };
  const double cost_z = err(rz[1], z_target) - err(rz[0], z_target);
  const double cost_y = err(ry[1], y_target) - err(ry[0], y_target);
  return cost_y <= cost_z ? std::pair{rz[0], ry[1]} : std::pair{rz[1], ry[0]};
}

}  // namespace detail

/// Oracle mode: nearest candidates to the ground-truth 2D directions.
inline SelectorChoice select_oracle(const CandidateSet& c, const CrayonPrompt& truth, bool want_move) {
  if (!truth.z_dir || !truth.y_dir || (want_move && !truth.move_dir))
    throw Error(ErrorCode::invalid_argument, "oracle selection needs ground-truth directions");
  SelectorChoice s;
  std::tie(s.z, s.y) = detail::pick_zy(c, *truth.z_dir, *truth.y_dir);
  if (want_move) s.m = rank_candidates(c, *truth.move_dir)[0];
  s.validate();
  return s;
}

/// Context for heuristic selection: the scene is only used to re-render.
struct HeuristicContext {
  const Scene* scene = nullptr;
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
  MotionSense sense = MotionSense::open;
  int normal_window = 5;
  /// Joint perturbation between the two frames, as a fraction of the range.
  double probe_fraction = 0.02;
};

namespace detail {

inline std::optional<Vec3> part_centroid(const RenderResult& f, const CameraIntrinsics& k, const CameraExtrinsics& e) {
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (int y = 0; y < f.rgb.height; ++y) {
    for (int x = 0; x < f.rgb.width; ++x) {
      if (f.label(x, y) != kPartBody || !f.depth.is_valid(x, y)) continue;
      sum += lift(Vec2(x, y), f.depth.at(x, y), k, e);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace detail

/// Part motion estimated from two renders around the current joint state.
inline Vec3 estimate_part_motion(const HeuristicContext& ctx) {
  const Scene& base = *ctx.scene;
  const double sign = static_cast<double>(static_cast<int>(ctx.sense));
  double delta = sign * ctx.probe_fraction * base.joint.range();
  Scene moved = base;
  moved.set_state(base.joint.state + delta);
  if (moved.joint.state == base.joint.state) {
    delta = -delta;
    moved.set_state(base.joint.state + delta);
  }
  const auto c0 = detail::part_centroid(render(base, ctx.intrinsics, ctx.extrinsics), ctx.intrinsics, ctx.extrinsics);
  const auto c1 = detail::part_centroid(render(moved, ctx.intrinsics, ctx.extrinsics), ctx.intrinsics, ctx.extrinsics);
  if (!c0 || !c1) throw Error(ErrorCode::not_found, "movable part is not visible");
  Vec3 motion = *c1 - *c0;
  if (delta * sign < 0.0) motion = -motion;
  return normalized_or_throw(motion, 1e-12, ErrorCode::degenerate);
}

/// Heuristic mode: z from the surface normal, m from the rendered part motion,
/// y as the candidate whose fronto-parallel lift is most orthogonal to z.
inline SelectorChoice select_heuristic(const CandidateSet& c, const RenderResult& frame, const HeuristicContext& ctx,
                                       bool want_move) {
  if (!ctx.scene) throw Error(ErrorCode::invalid_argument, "heuristic selection needs a scene");
  const auto& k = ctx.intrinsics;
  const auto& e = ctx.extrinsics;
  const Vec3 origin = lift(c.center, frame.depth, k, e);
  const Vec3 z3 = -estimate_normal(frame.depth, c.center, ctx.normal_window, k, e);
  SelectorChoice s;
  s.z = rank_candidates(c, project_direction_with_remedy(origin, z3, k, e).dir)[0];
  double best = -1.0;
  for (int i = 0; i < kCandidateCount; ++i) {
    if (i == s.z) continue;
    const Vec3 v = feasible_family(c.dirs[static_cast<std::size_t>(i)], c.center, k, e).in_plane;
    const double score = 1.0 - std::abs(v.dot(z3));
    if (score > best + 1e-12) {
      best = score;
      s.y = i;
    }
  }
  if (want_move) {
    const Vec3 m3 = estimate_part_motion(ctx);
    s.m = rank_candidates(c, project_direction_with_remedy(origin, m3, k, e).dir)[0];
  }
  s.validate();
  return s;
}

// --- external selector ----------------------------------------------------------

struct SelectorRequest {
  std::string task;
  bool want_move = true;
  Vec2 center = Vec2::Zero();
  RgbImage image;
  std::optional<SceneRef> scene;
  std::optional<std::pair<CameraIntrinsics, CameraExtrinsics>> camera;
};

namespace detail {

inline constexpr char kBase64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::string& in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const auto n = (std::uint32_t(std::uint8_t(in[i])) << 16) | (std::uint32_t(std::uint8_t(in[i + 1])) << 8) |
                   std::uint8_t(in[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out += kBase64Alphabet[(n >> s) & 63];
  }
  if (const std::size_t rest = in.size() - i) {
    std::uint32_t n = std::uint32_t(std::uint8_t(in[i])) << 16;
    if (rest == 2) n |= std::uint32_t(std::uint8_t(in[i + 1])) << 8;
    out += kBase64Alphabet[(n >> 18) & 63];
    out += kBase64Alphabet[(n >> 12) & 63];
    out += rest == 2 ? kBase64Alphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::string base64_decode(const std::string& in) {
  if (in.size() % 4 != 0) throw Error(ErrorCode::validation, "base64 length must be a multiple of 4");
  const auto value = [](char ch) -> int {
    const char* p = std::strchr(kBase64Alphabet, ch);
    return ch != '\0' && p ? static_cast<int>(p - kBase64Alphabet) : -1;
  };
  std::string out;
  for (std::size_t i = 0; i < in.size(); i += 4) {
    std::uint32_t n = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char ch = in[i + j];
      int v = 0;
      if (ch == '=' && i + 4 == in.size() && j >= 2) {
        ++pad;
      } else {
        if (pad) throw Error(ErrorCode::validation, "misplaced base64 padding");
        v = value(ch);
        if (v < 0) throw Error(ErrorCode::validation, "invalid base64 character");
      }
      n = (n << 6) | static_cast<std::uint32_t>(v);
    }
    out += static_cast<char>((n >> 16) & 255);
    if (pad < 2) out += static_cast<char>((n >> 8) & 255);
    if (pad < 1) out += static_cast<char>(n & 255);
  }
  return out;
}

}  // namespace detail

inline Json to_json(const SelectorRequest& r) {
  Json angles = Json::array();
  for (int i = 0; i < kCandidateCount; ++i) angles.push_back(kCandidateSpacingDeg * i);
  Json j{{"task", r.task},
         {"want_move", r.want_move},
         {"center", to_json(r.center)},
         {"candidate_angles_deg", angles},
         {"image_ppm_base64", detail::base64_encode(encode_ppm(r.image))}};
  j["scene"] = r.scene ? to_json(*r.scene) : Json(nullptr);
  j["camera"] = r.camera ? camera_json(r.camera->first, r.camera->second) : Json(nullptr);
  return j;
}

inline SelectorRequest selector_request_from_json(const Json& j) {
  try {
    SelectorRequest r;
    r.task = detail::field(j, "task").get<std::string>();
    r.want_move = detail::field(j, "want_move").get<bool>();
    r.center = vec2_from_json(detail::field(j, "center"));
    r.image = decode_ppm(detail::base64_decode(detail::field(j, "image_ppm_base64").get<std::string>()));
    if (j.contains("scene") && !j.at("scene").is_null()) r.scene = scene_ref_from_json(j.at("scene"));
    if (j.contains("camera") && !j.at("camera").is_null()) {
      const Json& c = j.at("camera");
      r.camera = std::pair{intrinsics_from_json(detail::field(c, "intrinsics")),
                           extrinsics_from_json(detail::field(c, "extrinsics"))};
    }
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed selector request: ") + e.what());
  }
}

inline Json to_json(const SelectorChoice& s) {
  return {{"z", s.z}, {"y", s.y}, {"m", s.m ? Json(*s.m) : Json(nullptr)}};
}

/// Strict reply schema: an object with exactly z, y, m; integers, m null iff
/// no move was requested. Out-of-range indices are clamped to the candidate set.
inline SelectorChoice parse_selector_reply(const std::string& body, bool want_move) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::exception&) {
    throw Error(ErrorCode::selector, "selector reply is not valid json");
  }
  if (!j.is_object() || j.size() != 3 || !j.contains("z") || !j.contains("y") || !j.contains("m"))
    throw Error(ErrorCode::selector, "selector reply must be an object with exactly z, y, m");
  const auto index = [](const Json& v, const char* name) {
    if (!v.is_number_integer()) throw Error(ErrorCode::selector, std::string("selector field ") + name + " must be an integer");
    return static_cast<int>(std::clamp<std::int64_t>(v.get<std::int64_t>(), 0, kCandidateCount - 1));
  };
  SelectorChoice s;
  s.z = index(j.at("z"), "z");
  s.y = index(j.at("y"), "y");
  if (want_move) {
    if (j.at("m").is_null()) throw Error(ErrorCode::selector, "selector reply is missing m");
    s.m = index(j.at("m"), "m");
  } else if (!j.at("m").is_null()) {
    throw Error(ErrorCode::selector, "selector reply has m for a task without movement");
  }
  s.validate();
  return s;
}

/// Anything that answers selector requests, remote or in-process.
class SelectorClient {
 public:
  virtual ~SelectorClient() = default;
  virtual SelectorChoice choose(const SelectorRequest& request) = 0;
};

// --- assembly --------------------------------------------------------------------

enum class SelectorMode { oracle, heuristic, external };

inline std::string_view to_string(SelectorMode m) {
  switch (m) {
    case SelectorMode::oracle: return "oracle";
    case SelectorMode::heuristic: return "heuristic";
    case SelectorMode::external: return "external";
  }
  return "unknown";
}

inline SelectorMode selector_mode_from_string(std::string_view s) {
  for (auto m : {SelectorMode::oracle, SelectorMode::heuristic, SelectorMode::external})
    if (to_string(m) == s) return m;
  throw Error(ErrorCode::invalid_argument, "unknown selector mode: " + std::string(s));
}

inline CrayonPrompt assemble_prompt(const CandidateSet& c, const SelectorChoice& s) {
  const auto dir = [&](int i) { return c.dirs[static_cast<std::size_t>(i)]; };
  return make_prompt(c.center, dir(s.z), dir(s.y), s.m ? std::optional<Vec2>(dir(*s.m)) : std::nullopt);
}

struct AutoPrompt {
  CrayonPrompt prompt;
  SelectorChoice choice;
  CandidateSet candidates;
};

/// Inputs for one automatic prompt; which fields matter depends on the mode.
struct AutoPromptContext {
  SelectorMode mode = SelectorMode::oracle;
  bool want_move = true;
  std::string task = "pull";
  /// Ground-truth 2D directions (oracle).
  const CrayonPrompt* truth = nullptr;
  /// Scene and sense (heuristic, and scene reference for external).
  const Scene* scene = nullptr;
  MotionSense sense = MotionSense::open;
  SelectorClient* client = nullptr;
};

inline AutoPrompt auto_prompt(const RenderResult& frame, const CameraIntrinsics& k, const CameraExtrinsics& e,
                              const AutoPromptContext& ctx) {
  AutoPrompt out;
  out.candidates = sample_candidates(detect_contact(frame));
  switch (ctx.mode) {
    case SelectorMode::oracle:
      if (!ctx.truth) throw Error(ErrorCode::invalid_argument, "oracle mode needs ground truth");
      out.choice = select_oracle(out.candidates, *ctx.truth, ctx.want_move);
      break;
    case SelectorMode::heuristic: {
      HeuristicContext hc;
      hc.scene = ctx.scene;
      hc.intrinsics = k;
      hc.extrinsics = e;
      hc.sense = ctx.sense;
      out.choice = select_heuristic(out.candidates, frame, hc, ctx.want_move);
      break;
    }
    case SelectorMode::external: {
      if (!ctx.client) throw Error(ErrorCode::invalid_argument, "external mode needs a selector client");
      SelectorRequest req;
      req.task = ctx.task;
      req.want_move = ctx.want_move;
      req.center = out.candidates.center;
      req.image = frame.rgb;
      if (ctx.scene) req.scene = scene_ref(*ctx.scene);
      req.camera = std::pair{k, e};
      out.choice = ctx.client->choose(req);
      out.choice.validate();
      if (out.choice.m.has_value() != ctx.want_move) throw Error(ErrorCode::selector, "selector reply disagrees with the task");
      break;
    }
  }
  out.prompt = assemble_prompt(out.candidates, out.choice);
  return out;
}

}  // namespace crayon
