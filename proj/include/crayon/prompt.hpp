#pragma once

#include "crayon/action.hpp"
#include "crayon/bins.hpp"
#include "crayon/camera.hpp"
#include "crayon/core.hpp"
#include "crayon/image.hpp"
#include "crayon/rng.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crayon {

enum class PromptPattern { P, PZ, PZY, PZYM };

inline constexpr std::array<PromptPattern, 4> kAllPatterns = {PromptPattern::P, PromptPattern::PZ, PromptPattern::PZY,
                                                              PromptPattern::PZYM};

inline std::string_view to_string(PromptPattern p) {
  switch (p) {
    case PromptPattern::P: return "P";
    case PromptPattern::PZ: return "PZ";
    case PromptPattern::PZY: return "PZY";
    case PromptPattern::PZYM: return "PZYM";
  }
  return "?";
}

inline PromptPattern pattern_from_string(std::string_view s) {
  for (auto p : kAllPatterns)
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::invalid_argument, "unknown prompt pattern '" + std::string(s) + "'");
}

inline bool pattern_has_z(PromptPattern p) { return p != PromptPattern::P; }
inline bool pattern_has_y(PromptPattern p) { return p == PromptPattern::PZY || p == PromptPattern::PZYM; }
inline bool pattern_has_m(PromptPattern p) { return p == PromptPattern::PZYM; }

/// 2D goal: contact pixel plus the directions the pattern calls for.
struct CrayonPrompt {
  Vec2 contact_px = Vec2::Zero();
  std::optional<Vec2> z_dir;
  std::optional<Vec2> y_dir;
  std::optional<Vec2> move_dir;
  PromptPattern pattern = PromptPattern::P;

  /// Names of fields that violate the pattern or unit-norm invariants.
  std::vector<std::string> violations(double tol = 1e-6) const {
    std::vector<std::string> bad;
    if (!contact_px.allFinite()) bad.emplace_back("contact_px");
    const auto check = [&](const std::optional<Vec2>& d, bool expected, const char* name) {
      if (d.has_value() != expected || (d && (!d->allFinite() || std::abs(d->norm() - 1.0) > tol)))
        bad.emplace_back(name);
    };
    check(z_dir, pattern_has_z(pattern), "z_dir");
    check(y_dir, pattern_has_y(pattern), "y_dir");
    check(move_dir, pattern_has_m(pattern), "move_dir");
    return bad;
  }

  void validate() const {
    const auto bad = violations();
    if (bad.empty()) return;
    std::string msg = "prompt fields violate pattern " + std::string(to_string(pattern)) + ":";
    for (const auto& b : bad) msg += " " + b;
    throw Error(ErrorCode::validation, msg);
  }

  bool operator==(const CrayonPrompt&) const = default;
};

/// Builds a prompt from whichever directions are present, normalizing them
/// and inferring the pattern.
inline CrayonPrompt make_prompt(const Vec2& contact, std::optional<Vec2> z = {}, std::optional<Vec2> y = {},
                                std::optional<Vec2> m = {}) {
  CrayonPrompt p;
  p.contact_px = contact;
  const auto unit = [](std::optional<Vec2>& d) {
    if (d) *d = normalized_or_throw(*d, 1e-12, ErrorCode::validation);
  };
  unit(z);
  unit(y);
  unit(m);
  if (!z && !y && !m) p.pattern = PromptPattern::P;
  else if (z && !y && !m) p.pattern = PromptPattern::PZ;
  else if (z && y && !m) p.pattern = PromptPattern::PZY;
  else if (z && y && m) p.pattern = PromptPattern::PZYM;
  else throw Error(ErrorCode::validation, "direction set does not form a P/PZ/PZY/PZYM pattern");
  p.z_dir = z;
  p.y_dir = y;
  p.move_dir = m;
  return p;
}

/// Drops directions beyond `pattern`; the source must carry at least those.
inline CrayonPrompt restrict_to(const CrayonPrompt& full, PromptPattern pattern) {
  CrayonPrompt p = full;
  p.pattern = pattern;
  if (!pattern_has_z(pattern)) p.z_dir.reset();
  if (!pattern_has_y(pattern)) p.y_dir.reset();
  if (!pattern_has_m(pattern)) p.move_dir.reset();
  p.validate();
  return p;
}

// --- 3D ground truth to 2D ------------------------------------------------

inline constexpr double kMaxRemedyDeg = 5.0;

struct DirectionRemedy {
  Vec2 dir = Vec2::UnitX();
  /// Angular perturbation applied to the 3D direction (0 when none needed).
  double noise_deg = 0.0;
};

/// Projects a 3D direction, tilting it by the smallest angle (searched on a
/// 0.25 degree grid, up to 5 degrees) that makes its projection non-degenerate.
inline DirectionRemedy project_direction_with_remedy(const Vec3& origin, const Vec3& dir, const CameraIntrinsics& k,
                                                     const CameraExtrinsics& e) {
  const double step = default_direction_step(origin, e);
  if (auto d = project_direction(origin, dir, step, k, e)) return {*d, 0.0};
  const Vec3 u = any_perpendicular(dir);
  const Vec3 v = dir.cross(u);
  for (int i = 1; i <= static_cast<int>(kMaxRemedyDeg / 0.25); ++i) {
    const double theta = deg_to_rad(0.25 * i);
    std::optional<Vec2> best;
    double best_len = 0.0;
    for (int j = 0; j < 16; ++j) {
      const double phi = 2.0 * kPi * j / 16.0;
      const Vec3 axis = std::cos(phi) * u + std::sin(phi) * v;
      const Vec3 tilted = rotate_about(dir, axis, theta);
      const Vec2 a = project(origin, k, e);
      const Vec2 b = project(origin + step * tilted, k, e);
      const double len = (b - a).norm();
      if (len >= kDegeneratePixels && len > best_len) {
        best_len = len;
        best = (b - a) / len;
      }
    }
    if (best) return {*best, 0.25 * i};
  }
  throw Error(ErrorCode::degenerate, "direction stays degenerate under 5 degrees of perturbation");
}

struct DerivedPrompt {
  CrayonPrompt prompt;
  /// Remedy noise in degrees for z, y, m (0 when not needed or absent).
  std::array<double, 3> remedy_deg{0.0, 0.0, 0.0};

  bool remedied() const { return remedy_deg[0] > 0 || remedy_deg[1] > 0 || remedy_deg[2] > 0; }
};

inline DerivedPrompt derive_2d_prompts(const GroundTruthAction& gt, const CameraIntrinsics& k,
                                       const CameraExtrinsics& e, PromptPattern pattern = PromptPattern::PZYM) {
  DerivedPrompt out;
  out.prompt.pattern = pattern;
  out.prompt.contact_px = project(gt.contact_point, k, e);
  if (!k.in_bounds(out.prompt.contact_px)) throw Error(ErrorCode::invalid_argument, "contact point outside the frustum");
  const auto lift_dir = [&](const Vec3& d, int slot) {
    const auto r = project_direction_with_remedy(gt.contact_point, d.normalized(), k, e);
    out.remedy_deg[static_cast<std::size_t>(slot)] = r.noise_deg;
    return r.dir;
  };
  if (pattern_has_z(pattern)) out.prompt.z_dir = lift_dir(gt.z_axis, 0);
  if (pattern_has_y(pattern)) out.prompt.y_dir = lift_dir(gt.y_axis, 1);
  if (pattern_has_m(pattern)) {
    if (!gt.move_dir) throw Error(ErrorCode::invalid_argument, "pattern needs a moving direction");
    out.prompt.move_dir = lift_dir(*gt.move_dir, 2);
  }
  return out;
}

// --- raster overlay ---------------------------------------------------------

struct PromptStyle {
  Rgb contact_color{0, 0, 255};
  Rgb z_color{255, 0, 0};
  Rgb y_color{0, 255, 0};
  Rgb move_color{255, 255, 0};
  double disc_radius = 5.0;
  double line_length = 40.0;
  double line_thickness = 3.0;
  /// Per-channel match tolerance, in 8-bit levels.
  int tolerance = 30;
};

namespace detail {

inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

inline void draw_segment(RgbImage& img, const Vec2& a, const Vec2& b, double thickness, Rgb color) {
  const double r = 0.5 * thickness;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - r)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - r)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (segment_distance(Vec2(x, y), a, b) <= r) img.set(x, y, color);
}

inline void draw_disc(RgbImage& img, const Vec2& c, double radius, Rgb color) {
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x() - radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x() + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y() - radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y() + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if ((Vec2(x, y) - c).norm() <= radius) img.set(x, y, color);
}

inline bool matches(Rgb px, Rgb color, int tol) {
  for (int i = 0; i < 3; ++i)
    if (std::abs(int(px[i]) - int(color[i])) > tol) return false;
  return true;
}

}  // namespace detail

/// Overlays the prompt: direction segments start at the contact pixel and are
/// drawn yellow, green, red, then the blue contact disc on top.
inline RgbImage rasterize(const RgbImage& image, const CrayonPrompt& prompt, const PromptStyle& style = {}) {
  RgbImage out = image;
  const Vec2 c = prompt.contact_px;
  const auto line = [&](const std::optional<Vec2>& d, Rgb color) {
    if (d) detail::draw_segment(out, c, c + style.line_length * *d, style.line_thickness, color);
  };
  line(prompt.move_dir, style.move_color);
  line(prompt.y_dir, style.y_color);
  line(prompt.z_dir, style.z_color);
  detail::draw_disc(out, c, style.disc_radius, style.contact_color);
  return out;
}

/// Recovers a prompt from overlay colors. Directions come from the principal
/// axis of each color's pixels; the head is the segment end farther from the
/// contact centroid. When both ends sit at similar distances (a line not
/// anchored at the contact), the sign is taken from `hint` if one is given.
inline CrayonPrompt extract(const RgbImage& image, const PromptStyle& style = {}, const CrayonPrompt* hint = nullptr) {
  std::array<std::vector<Vec2>, 4> pix;
  const std::array<Rgb, 4> colors{style.contact_color, style.z_color, style.y_color, style.move_color};
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Rgb px = image.at(x, y);
      for (std::size_t c = 0; c < 4; ++c) {
        if (detail::matches(px, colors[c], style.tolerance)) {
          pix[c].emplace_back(x, y);
          break;
        }
      }
    }
  }
  if (pix[0].empty()) throw Error(ErrorCode::codec, "no contact-colored pixels");
  Vec2 contact = Vec2::Zero();
  for (const auto& p : pix[0]) contact += p;
  contact /= static_cast<double>(pix[0].size());

  const double min_pixels = style.line_thickness * style.line_thickness;
  const auto direction = [&](const std::vector<Vec2>& pts, const std::optional<Vec2>& hint_dir) -> std::optional<Vec2> {
    if (static_cast<double>(pts.size()) < min_pixels) return std::nullopt;
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    Vec2 axis = eig.eigenvectors().col(1).normalized();
    double lo = 0.0, hi = 0.0;
    for (const auto& p : pts) {
      const double s = (p - mean).dot(axis);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    const double d_lo = (mean + lo * axis - contact).norm();
    const double d_hi = (mean + hi * axis - contact).norm();
    if (d_lo > d_hi) axis = -axis;
    if (std::abs(d_hi - d_lo) < 0.25 * style.line_length && hint_dir && axis.dot(*hint_dir) < 0.0) axis = -axis;
    return axis;
  };
  const auto hinted = [&](auto member) -> std::optional<Vec2> { return hint ? hint->*member : std::nullopt; };
  return make_prompt(contact, direction(pix[1], hinted(&CrayonPrompt::z_dir)),
                     direction(pix[2], hinted(&CrayonPrompt::y_dir)),
                     direction(pix[3], hinted(&CrayonPrompt::move_dir)));
}

// --- language -------------------------------------------------------------

namespace detail {

inline std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string tuple2(const Vec2& v) { return "(" + fmt2(v.x()) + ", " + fmt2(v.y()) + ")"; }
inline std::string tuple3(const Vec3& v) {
  return "(" + fmt2(v.x()) + ", " + fmt2(v.y()) + ", " + fmt2(v.z()) + ")";
}

}  // namespace detail

inline constexpr std::string_view kTaskSentence = "Predict the contact point and orientation for manipulating the object.";

inline std::string format_language(const CrayonPrompt& prompt) {
  using detail::tuple2;
  prompt.validate();
  std::string s(kTaskSentence);
  const std::string at = tuple2(prompt.contact_px);
  switch (prompt.pattern) {
    case PromptPattern::P:
      s += " The hints in the image include the contact point with a blue dot. Specifically, the contact point is at " +
           at + ".";
      break;
    case PromptPattern::PZ:
      s += " The hints in the image include a blue dot for the contact point and a red line for the gripper z-axis 2D "
           "direction. Specifically, the contact point is at " +
           at + ", and the gripper z-axis 2D direction is " + tuple2(*prompt.z_dir) + ".";
      break;
    case PromptPattern::PZY:
      s += " The hints in the image include a blue dot for the contact point, a red line for the gripper z-axis 2D "
           "direction, and a green line for the gripper y-axis 2D direction. Specifically, the contact point is at " +
           at + ", the gripper z-axis 2D direction is " + tuple2(*prompt.z_dir) +
           ", and the gripper y-axis 2D direction is " + tuple2(*prompt.y_dir) + ".";
      break;
    case PromptPattern::PZYM:
      s += " The hints in the image include a blue dot for the contact point, a red line for the gripper z-axis 2D "
           "direction, a green line for the gripper y-axis 2D direction, and a yellow line for the moving 2D "
           "direction. Specifically, the contact point is at " +
           at + ", the gripper z-axis 2D direction is " + tuple2(*prompt.z_dir) +
           ", the gripper y-axis 2D direction is " + tuple2(*prompt.y_dir) +
           ", and the gripper moving 2D direction is " + tuple2(*prompt.move_dir) + ".";
      break;
  }
  return s;
}

/// Supervision text for the toy model. Direction components are written at
/// bin precision (multiples of 0.02).
inline std::string format_ground_truth_text(const GroundTruthAction& gt, const Vec2& contact_px) {
  using detail::tuple3;
  std::string s = "The contact point is at " + detail::tuple2(contact_px) + ", the gripper z-axis 3D direction is " +
                  tuple3(quantize(gt.z_axis.normalized()));
  const std::string y = tuple3(quantize(gt.y_axis.normalized()));
  if (gt.move_dir)
    return s + ", the gripper y-axis 3D direction is " + y + ", and the moving 3D direction is " +
           tuple3(quantize(gt.move_dir->normalized())) + ".";
  return s + ", and the gripper y-axis 3D direction is " + y + ".";
}

struct ParsedGroundTruth {
  Vec2 contact_px = Vec2::Zero();
  Vec3 z_axis = Vec3::Zero();
  Vec3 y_axis = Vec3::Zero();
  std::optional<Vec3> move_dir;
};

inline ParsedGroundTruth parse_ground_truth_text(const std::string& text) {
  ParsedGroundTruth out;
  double v[11];
  int consumed = 0;
  const int n = std::sscanf(text.c_str(),
                            "The contact point is at (%lf, %lf), the gripper z-axis 3D direction is (%lf, %lf, %lf), "
                            "the gripper y-axis 3D direction is (%lf, %lf, %lf), and the moving 3D direction is "
                            "(%lf, %lf, %lf).%n",
                            &v[0], &v[1], &v[2], &v[3], &v[4], &v[5], &v[6], &v[7], &v[8], &v[9], &v[10], &consumed);
  if (n == 11 && consumed == static_cast<int>(text.size())) {
    out.move_dir = Vec3(v[8], v[9], v[10]);
  } else {
    consumed = 0;
    const int n2 = std::sscanf(text.c_str(),
                               "The contact point is at (%lf, %lf), the gripper z-axis 3D direction is (%lf, %lf, "
                               "%lf), and the gripper y-axis 3D direction is (%lf, %lf, %lf).%n",
                               &v[0], &v[1], &v[2], &v[3], &v[4], &v[5], &v[6], &v[7], &consumed);
    if (n2 != 8 || consumed != static_cast<int>(text.size())) throw Error(ErrorCode::codec, "unparseable ground truth text");
  }
  out.contact_px = {v[0], v[1]};
  out.z_axis = {v[2], v[3], v[4]};
  out.y_axis = {v[5], v[6], v[7]};
  return out;
}

// --- noise ------------------------------------------------------------------

/// Adds uniform noise of up to `fraction` times each direction component's
/// magnitude, then renormalizes. The contact pixel is left untouched.
inline CrayonPrompt perturb(const CrayonPrompt& prompt, double fraction, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0) throw Error(ErrorCode::invalid_argument, "noise fraction must be in [0, 1]");
  CrayonPrompt out = prompt;
  if (fraction == 0.0) return out;
  const auto jitter = [&](std::optional<Vec2>& d) {
    if (!d) return;
    Vec2 v = *d;
    for (int i = 0; i < 2; ++i) v(i) += rng.uniform(-1.0, 1.0) * fraction * std::abs(v(i));
    if (v.norm() > 1e-12) d = v.normalized();
  };
  jitter(out.z_dir);
  jitter(out.y_dir);
  jitter(out.move_dir);
  return out;
}

}  // namespace crayon
