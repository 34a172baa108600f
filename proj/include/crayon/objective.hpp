#pragma once

#include "crayon/action.hpp"
#include "crayon/bins.hpp"
#include "crayon/camera.hpp"
#include "crayon/core.hpp"
#include "crayon/prompt.hpp"

#include <Eigen/Core>

#include <bitset>
#include <optional>

namespace crayon {

/// Rows 0-2: z-axis (x, y, z); rows 3-5: y-axis; rows 6-8: moving direction.
inline constexpr int kComponentCount = 9;
using LogitMatrix = Eigen::Matrix<double, kComponentCount, kBinCount, Eigen::RowMajor>;
using ComponentMask = std::bitset<kComponentCount>;

inline ComponentMask component_mask(bool with_move) {
  return with_move ? ComponentMask{0x1ff} : ComponentMask{0x3f};
}

inline double bin_center(int slot) { return undiscretize(BinIndex::from_slot(slot)); }

inline Eigen::Matrix<double, 1, kBinCount> bin_centers() {
  Eigen::Matrix<double, 1, kBinCount> c;
  for (int k = 0; k < kBinCount; ++k) c(k) = bin_center(k);
  return c;
}

inline Eigen::Matrix<double, 1, kBinCount> softmax_row(const Eigen::Matrix<double, 1, kBinCount>& row) {
  const double m = row.maxCoeff();
  Eigen::Matrix<double, 1, kBinCount> p = (row.array() - m).exp();
  return p / p.sum();
}

/// GT labels for all nine components (moving direction zero when absent).
inline std::array<BinIndex, kComponentCount> component_labels(const GroundTruthAction& gt) {
  std::array<BinIndex, kComponentCount> labels{};
  const Vec3 z = gt.z_axis.normalized(), y = gt.y_axis.normalized();
  const Vec3 m = gt.move_dir ? Vec3(gt.move_dir->normalized()) : Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    labels[static_cast<std::size_t>(i)] = discretize(z(i));
    labels[static_cast<std::size_t>(3 + i)] = discretize(y(i));
    labels[static_cast<std::size_t>(6 + i)] = discretize(m(i));
  }
  return labels;
}

/// Mean cross-entropy over the active components.
inline double text_loss(const LogitMatrix& logits, const GroundTruthAction& gt, ComponentMask active) {
  const auto labels = component_labels(gt);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < kComponentCount; ++c) {
    if (!active[static_cast<std::size_t>(c)]) continue;
    const auto row = logits.row(c);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    sum += lse - row(labels[static_cast<std::size_t>(c)].slot());
    ++n;
  }
  return n ? sum / n : 0.0;
}

/// Squared cosine between z and y: zero exactly when orthogonal.
inline double orthogonal_loss(const Vec3& z, const Vec3& y) {
  if (!(z.norm() > 1e-9) || !(y.norm() > 1e-9)) throw Error(ErrorCode::degenerate, "orthogonality of a zero vector");
  const double c = z.dot(y) / (z.norm() * y.norm());
  return c * c;
}

struct VectorPairGradient {
  double value = 0.0;
  Vec3 d_first = Vec3::Zero();
  Vec3 d_second = Vec3::Zero();
};

inline VectorPairGradient orthogonal_loss_gradient(const Vec3& z, const Vec3& y) {
  const double nz = z.norm(), ny = y.norm();
  if (!(nz > 1e-9) || !(ny > 1e-9)) throw Error(ErrorCode::degenerate, "orthogonality of a zero vector");
  const Vec3 zh = z / nz, yh = y / ny;
  const double c = zh.dot(yh);
  return {c * c, 2.0 * c * (yh - c * zh) / nz, 2.0 * c * (zh - c * yh) / ny};
}

struct ProjectionTerm {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();
  bool degenerate = false;
};

/// 1 - cos between the reprojection of `dir` drawn from `origin` and the
/// prompted 2D direction, with its gradient with respect to `dir`.
inline ProjectionTerm projection_term(const Vec3& origin, const Vec3& dir, const Vec2& target, double step,
                                      const CameraIntrinsics& k, const CameraExtrinsics& e) {
  ProjectionTerm out;
  const double nv = dir.norm();
  if (!(nv > 1e-12)) {
    out.degenerate = true;
    out.value = 1.0;
    return out;
  }
  const Vec3 v = dir / nv;
  const Vec3 tip = origin + step * v;
  const Vec2 d = project(tip, k, e) - project(origin, k, e);
  const double nd = d.norm();
  const Vec2 t = target.normalized();
  if (nd < kDegeneratePixels) out.degenerate = true;
  if (!(nd > 1e-12)) {
    out.value = 1.0;
    return out;
  }
  const double c = d.dot(t) / nd;
  out.value = 1.0 - c;
  const Vec2 dc_dd = (t - c * d / nd) / nd;
  const Vec3 dc_dv = step * project_jacobian(tip, k, e).transpose() * dc_dd;
  out.gradient = -(dc_dv - v * v.dot(dc_dv)) / nv;
  return out;
}

struct ProjectionLoss {
  double value = 0.0;
  int terms = 0;
  /// True when some reprojection was degenerate and the tilt remedy was used.
  bool remedied = false;
};

/// Sum of (1 - cosine) between each prompted direction and the reprojection of
/// the matching predicted 3D direction; directions absent from the prompt are
/// excluded. The predicted contact pixel is lifted with `depth`.
inline ProjectionLoss projection_loss(const PredictedAction& pred, const CrayonPrompt& prompt,
                                      const CameraIntrinsics& k, const CameraExtrinsics& e, const DepthImage& depth) {
  const Vec3 origin = lift(pred.contact_px_pred, depth, k, e);
  ProjectionLoss out;
  const auto add = [&](const std::optional<Vec2>& target, const std::optional<Vec3>& dir) {
    if (!target) return;
    if (!dir) throw Error(ErrorCode::invalid_argument, "prediction lacks a prompted direction");
    const auto r = project_direction_with_remedy(origin, dir->normalized(), k, e);
    out.remedied = out.remedied || r.noise_deg > 0.0;
    out.value += 1.0 - r.dir.dot(target->normalized());
    ++out.terms;
  };
  add(prompt.z_dir, pred.z_axis);
  add(prompt.y_dir, pred.y_axis);
  add(prompt.move_dir, pred.move_dir);
  return out;
}

struct LossWeights {
  double text = 1.0;
  double ortho = 1.0;
  double proj = 1.0;

  void validate() const {
    if (text < 0 || ortho < 0 || proj < 0 || (text == 0 && ortho == 0 && proj == 0))
      throw Error(ErrorCode::invalid_argument, "loss weights must be non-negative and not all zero");
  }
};

enum LossTerm : std::size_t { kTextTerm = 0, kOrthoTerm = 1, kProjTerm = 2 };

struct LossParts {
  double l_text = 0.0;
  double l_ortho = 0.0;
  double l_proj = 0.0;
  std::bitset<3> active{0b111};
};

struct LossBreakdown {
  double l_text = 0.0;
  double l_ortho = 0.0;
  double l_proj = 0.0;
  double total = 0.0;
  std::bitset<3> active{0b111};
};

inline LossBreakdown total_loss(const LossParts& parts, const LossWeights& w) {
  LossBreakdown b{parts.l_text, parts.l_ortho, parts.l_proj, 0.0, parts.active};
  if (parts.active[kTextTerm]) b.total += w.text * parts.l_text;
  if (parts.active[kOrthoTerm]) b.total += w.ortho * parts.l_ortho;
  if (parts.active[kProjTerm]) b.total += w.proj * parts.l_proj;
  return b;
}

// --- composite objective over logits ------------------------------------

/// Everything the composite loss needs for one training sample.
struct ObjectiveSample {
  GroundTruthAction gt;
  CrayonPrompt prompt;
  /// Predicted contact lifted to 3D.
  Vec3 contact_3d = Vec3::Zero();
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
};

struct CompositeEvaluation {
  LossBreakdown breakdown;
  LogitMatrix gradient = LogitMatrix::Zero();
  /// Set when an orthogonality or reprojection term was evaluated at a
  /// degenerate point; that term then contributes no gradient.
  bool degenerate = false;
};

/// Soft-argmax decode of the three direction rows (expected bin centers).
inline std::array<Vec3, 3> soft_decode(const LogitMatrix& logits, std::array<Eigen::Matrix<double, 1, kBinCount>, 9>* probs = nullptr) {
  static const auto centers = bin_centers();
  std::array<Vec3, 3> out;
  for (int c = 0; c < kComponentCount; ++c) {
    const auto p = softmax_row(logits.row(c));
    out[static_cast<std::size_t>(c / 3)](c % 3) = p.dot(centers);
    if (probs) (*probs)[static_cast<std::size_t>(c)] = p;
  }
  return out;
}

/// L = w_T L_T + w_O L_O + w_P L_P with L_O and L_P evaluated on the
/// soft-argmax decode, plus the analytic gradient with respect to the logits.
inline CompositeEvaluation composite_loss(const LogitMatrix& logits, const ObjectiveSample& s, const LossWeights& w,
                                          bool with_gradient = true) {
  static const auto centers = bin_centers();
  CompositeEvaluation out;
  const ComponentMask mask = component_mask(s.gt.move_dir.has_value());
  const auto labels = component_labels(s.gt);
  std::array<Eigen::Matrix<double, 1, kBinCount>, 9> probs;
  const auto decoded = soft_decode(logits, &probs);

  LossParts parts;
  parts.active[kTextTerm] = w.text > 0;
  parts.active[kOrthoTerm] = w.ortho > 0;
  parts.active[kProjTerm] = w.proj > 0;

  const int active_rows = static_cast<int>(mask.count());
  for (int c = 0; c < kComponentCount; ++c) {
    if (!mask[static_cast<std::size_t>(c)]) continue;
    const auto& p = probs[static_cast<std::size_t>(c)];
    const int label = labels[static_cast<std::size_t>(c)].slot();
    parts.l_text -= std::log(std::max(p(label), 1e-300)) / active_rows;
    if (with_gradient && parts.active[kTextTerm]) {
      Eigen::Matrix<double, 1, kBinCount> g = p;
      g(label) -= 1.0;
      out.gradient.row(c) += w.text * g / active_rows;
    }
  }

  std::array<Vec3, 3> d_decoded{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  if (decoded[0].norm() > 1e-9 && decoded[1].norm() > 1e-9) {
    const auto og = orthogonal_loss_gradient(decoded[0], decoded[1]);
    parts.l_ortho = og.value;
    if (parts.active[kOrthoTerm]) {
      d_decoded[0] += w.ortho * og.d_first;
      d_decoded[1] += w.ortho * og.d_second;
    }
  } else {
    out.degenerate = true;
  }

  const double step = default_direction_step(s.contact_3d, s.extrinsics);
  const std::array<const std::optional<Vec2>*, 3> targets{&s.prompt.z_dir, &s.prompt.y_dir, &s.prompt.move_dir};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!targets[i]->has_value()) continue;
    const auto term = projection_term(s.contact_3d, decoded[i], **targets[i], step, s.intrinsics, s.extrinsics);
    parts.l_proj += term.value;
    if (term.degenerate) out.degenerate = true;
    else if (parts.active[kProjTerm]) d_decoded[i] += w.proj * term.gradient;
  }

  if (with_gradient) {
    for (int c = 0; c < kComponentCount; ++c) {
      const double g = d_decoded[static_cast<std::size_t>(c / 3)](c % 3);
      if (g == 0.0) continue;
      const auto& p = probs[static_cast<std::size_t>(c)];
      const double v = decoded[static_cast<std::size_t>(c / 3)](c % 3);
      out.gradient.row(c) += g * (p.array() * (centers.array() - v)).matrix();
    }
  }
  out.breakdown = total_loss(parts, w);
  return out;
}

// --- finite-difference checking ---------------------------------------------

/// Central differences of a scalar function, step `h` per coordinate.
template <typename F>
Eigen::VectorXd central_difference(F&& f, Eigen::VectorXd x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    x(i) = xi + h;
    const double fp = f(x);
    x(i) = xi - h;
    const double fm = f(x);
    x(i) = xi;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
  Eigen::VectorXd numeric;
};

/// Per-coordinate |analytic - numeric| / max(|analytic|, |numeric|, floor).
template <typename F>
GradientCheck check_gradient(F&& f, const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, double h = 1e-5,
                             double floor = 1e-6) {
  GradientCheck out;
  out.numeric = central_difference(f, x, h);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double a = analytic(i), n = out.numeric(i);
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_index = i;
    }
  }
  return out;
}

}  // namespace crayon
