#pragma once

#include "crayon/action.hpp"
#include "crayon/camera.hpp"
#include "crayon/core.hpp"
#include "crayon/objective.hpp"
#include "crayon/predictor.hpp"
#include "crayon/prompt.hpp"
#include "crayon/rng.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace crayon {

inline constexpr int kPatchSize = 16;
/// Depth differences are divided by this before entering the network.
inline constexpr double kPatchDepthScale = 0.05;
inline constexpr double kPatchClamp = 3.0;
// patch, three 2D vectors, pattern one-hot, camera-frame viewing ray
inline constexpr int kToyInputs = kPatchSize * kPatchSize + 6 + 4 + 3;
inline constexpr int kToyOutputs = kComponentCount * kBinCount;

/// Sampling probabilities over P, PZ, PZY, PZYM.
struct CurriculumSpec {
  std::array<double, 4> probs{0.25, 0.25, 0.25, 0.25};

  void validate() const {
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw Error(ErrorCode::invalid_argument, "curriculum probability must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::invalid_argument, "curriculum probabilities must sum to 1");
  }

  PromptPattern sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return kAllPatterns[i];
    }
    return PromptPattern::PZYM;
  }
};

struct ToyConfig {
  int hidden = 64;
  int epochs = 60;
  int batch = 16;
  double learning_rate = 2e-3;
  LossWeights weights;
  CurriculumSpec curriculum;
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden <= 0 || epochs <= 0 || batch <= 0) throw Error(ErrorCode::invalid_argument, "toy sizes must be positive");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
    weights.validate();
    curriculum.validate();
  }

  nlohmann::json to_json() const {
    return {{"hidden", hidden},
            {"epochs", epochs},
            {"batch", batch},
            {"learning_rate", learning_rate},
            {"weights", {weights.text, weights.ortho, weights.proj}},
            {"curriculum", curriculum.probs},
            {"seed", seed}};
  }

  static ToyConfig from_json(const nlohmann::json& j) {
    ToyConfig c;
    c.hidden = j.at("hidden").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.batch = j.at("batch").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    const auto w = j.at("weights").get<std::array<double, 3>>();
    c.weights = {w[0], w[1], w[2]};
    c.curriculum.probs = j.at("curriculum").get<std::array<double, 4>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }

  std::string fingerprint() const { return hex64(fnv1a(to_json().dump())); }
};

/// Pattern-independent inputs of one sample, computed once per record. The
/// model reasons in the camera frame: targets and contact are stored there.
struct ToySample {
  /// Ground truth rotated into the camera frame.
  GroundTruthAction gt;
  /// Full prompt; restricted per curriculum draw during training.
  CrayonPrompt prompt;
  CameraIntrinsics intrinsics;
  Vec3 contact_camera = Vec3::Zero();
  std::array<double, kPatchSize * kPatchSize> patch{};
};

namespace detail {

inline std::array<double, kPatchSize * kPatchSize> depth_patch(const DepthImage& depth, const Vec2& px) {
  const auto [ci, cj] = nearest_pixel(px);
  if (!depth.is_valid(ci, cj)) throw Error(ErrorCode::invalid_depth, "no valid depth at the contact pixel");
  const double d0 = depth.at(ci, cj);
  std::array<double, kPatchSize * kPatchSize> out{};
  for (int r = 0; r < kPatchSize; ++r) {
    for (int c = 0; c < kPatchSize; ++c) {
      const int i = ci + c - kPatchSize / 2, j = cj + r - kPatchSize / 2;
      double v = kPatchClamp;
      if (depth.is_valid(i, j)) v = std::clamp((depth.at(i, j) - d0) / kPatchDepthScale, -kPatchClamp, kPatchClamp);
      out[static_cast<std::size_t>(r * kPatchSize + c)] = v;
    }
  }
  return out;
}

inline Eigen::VectorXd toy_features(const ToySample& s, const CrayonPrompt& prompt) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kToyInputs);
  int k = 0;
  for (double v : s.patch) x(k++) = v;
  for (const auto* d : {&prompt.z_dir, &prompt.y_dir, &prompt.move_dir}) {
    if (d->has_value()) x.segment<2>(k) = (*d)->normalized();
    k += 2;
  }
  x(k + static_cast<int>(prompt.pattern)) = 1.0;
  k += 4;
  x.segment<3>(k) = pixel_ray(prompt.contact_px, s.intrinsics, CameraExtrinsics{});
  return x;
}

}  // namespace detail

inline ToySample make_toy_sample(const GroundTruthAction& gt, const CrayonPrompt& prompt, const DepthImage& depth,
                                 const CameraIntrinsics& k, const CameraExtrinsics& e) {
  ToySample s;
  const Mat3& r = e.rotation;
  s.gt = gt;
  s.gt.contact_point = e.to_camera(gt.contact_point);
  s.gt.z_axis = r * gt.z_axis;
  s.gt.y_axis = r * gt.y_axis;
  if (gt.move_dir) s.gt.move_dir = r * *gt.move_dir;
  s.prompt = prompt;
  s.intrinsics = k;
  s.contact_camera = e.to_camera(lift(prompt.contact_px, depth, k, e));
  s.patch = detail::depth_patch(depth, prompt.contact_px);
  return s;
}

/// Two tanh hidden layers feeding 9x101 logits.
struct ToyModelParams {
  ToyConfig config;
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  std::vector<double> training_curve;

  static ToyModelParams initialize(const ToyConfig& cfg, Rng& rng) {
    ToyModelParams p;
    p.config = cfg;
    const auto glorot = [&](int rows, int cols) {
      const double s = std::sqrt(2.0 / (rows + cols));
      Eigen::MatrixXd m(rows, cols);
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = s * rng.normal();
      return m;
    };
    p.w1 = glorot(cfg.hidden, kToyInputs);
    p.w2 = glorot(cfg.hidden, cfg.hidden);
    p.w3 = glorot(kToyOutputs, cfg.hidden);
    p.b1 = Eigen::VectorXd::Zero(cfg.hidden);
    p.b2 = Eigen::VectorXd::Zero(cfg.hidden);
    p.b3 = Eigen::VectorXd::Zero(kToyOutputs);
    return p;
  }

  bool finite() const {
    return w1.allFinite() && w2.allFinite() && w3.allFinite() && b1.allFinite() && b2.allFinite() && b3.allFinite();
  }

  LogitMatrix logits(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd h1 = (w1 * x + b1).array().tanh().matrix();
    const Eigen::VectorXd h2 = (w2 * h1 + b2).array().tanh().matrix();
    const Eigen::VectorXd out = w3 * h2 + b3;
    return Eigen::Map<const LogitMatrix>(out.data());
  }
};

// --- serialization ------------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error(ErrorCode::io, "matrix size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

}  // namespace detail

inline std::string save_toy_model(const ToyModelParams& p) {
  nlohmann::json j;
  j["config"] = p.config.to_json();
  j["config_hash"] = p.config.fingerprint();
  j["w1"] = detail::matrix_json(p.w1);
  j["w2"] = detail::matrix_json(p.w2);
  j["w3"] = detail::matrix_json(p.w3);
  j["b1"] = detail::matrix_json(p.b1);
  j["b2"] = detail::matrix_json(p.b2);
  j["b3"] = detail::matrix_json(p.b3);
  j["training_curve"] = p.training_curve;
  return j.dump();
}

/// Refuses files whose embedded hash disagrees with their config, or with
/// `expected` when given.
inline ToyModelParams load_toy_model(const std::string& text, const ToyConfig* expected = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, std::string("model file is not valid json: ") + e.what());
  }
  ToyModelParams p;
  try {
    p.config = ToyConfig::from_json(j.at("config"));
    const auto stored = j.at("config_hash").get<std::string>();
    if (stored != p.config.fingerprint()) throw Error(ErrorCode::hash_mismatch, "model config hash mismatch");
    if (expected && stored != expected->fingerprint())
      throw Error(ErrorCode::hash_mismatch, "model was trained with a different config");
    p.w1 = detail::matrix_from_json(j.at("w1"));
    p.w2 = detail::matrix_from_json(j.at("w2"));
    p.w3 = detail::matrix_from_json(j.at("w3"));
    p.b1 = detail::matrix_from_json(j.at("b1"));
    p.b2 = detail::matrix_from_json(j.at("b2"));
    p.b3 = detail::matrix_from_json(j.at("b3"));
    p.training_curve = j.at("training_curve").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, std::string("malformed model file: ") + e.what());
  }
  const int h = p.config.hidden;
  if (p.w1.rows() != h || p.w1.cols() != kToyInputs || p.w2.rows() != h || p.w2.cols() != h ||
      p.w3.rows() != kToyOutputs || p.w3.cols() != h || p.b1.size() != h || p.b2.size() != h ||
      p.b3.size() != kToyOutputs)
    throw Error(ErrorCode::io, "model shapes disagree with config");
  return p;
}

// --- training -----------------------------------------------------------------

namespace detail {

struct AdamSlot {
  Eigen::MatrixXd m, v;
  explicit AdamSlot(const Eigen::MatrixXd& like)
      : m(Eigen::MatrixXd::Zero(like.rows(), like.cols())), v(Eigen::MatrixXd::Zero(like.rows(), like.cols())) {}

  void step(Eigen::MatrixXd& w, const Eigen::MatrixXd& g, double lr, int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
    w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace detail

/// Minimizes the composite loss with Adam; one curriculum pattern draw per
/// sample per epoch. Deterministic given the config seed.
inline ToyModelParams train_toy_model(const std::vector<ToySample>& data, const ToyConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorCode::invalid_argument, "training set is empty");
  Rng rng(cfg.seed);
  ToyModelParams p = ToyModelParams::initialize(cfg, rng);
  std::array<Eigen::MatrixXd*, 6> params{&p.w1, &p.w2, &p.w3, nullptr, nullptr, nullptr};
  Eigen::MatrixXd b1 = p.b1, b2 = p.b2, b3 = p.b3;
  params[3] = &b1;
  params[4] = &b2;
  params[5] = &b3;
  std::vector<detail::AdamSlot> slots;
  for (auto* m : params) slots.emplace_back(*m);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  int t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      std::array<Eigen::MatrixXd, 6> grads;
      for (std::size_t k = 0; k < params.size(); ++k) grads[k] = Eigen::MatrixXd::Zero(params[k]->rows(), params[k]->cols());
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      for (std::size_t n = start; n < end; ++n) {
        const ToySample& s = data[order[n]];
        const CrayonPrompt prompt = restrict_to(s.prompt, cfg.curriculum.sample(rng));
        const Eigen::VectorXd x = detail::toy_features(s, prompt);
        const Eigen::VectorXd h1 = (b1 + p.w1 * x).array().tanh().matrix();
        const Eigen::VectorXd h2 = (b2 + p.w2 * h1).array().tanh().matrix();
        const Eigen::VectorXd out = p.w3 * h2 + b3;
        const LogitMatrix logits = Eigen::Map<const LogitMatrix>(out.data());
        const ObjectiveSample os{s.gt, prompt, s.contact_camera, s.intrinsics, CameraExtrinsics{}};
        const CompositeEvaluation ev = composite_loss(logits, os, cfg.weights);
        epoch_loss += ev.breakdown.total;
        const Eigen::VectorXd g3 = Eigen::Map<const Eigen::VectorXd>(ev.gradient.data(), kToyOutputs);
        const Eigen::VectorXd g2 = (p.w3.transpose() * g3).cwiseProduct((1.0 - h2.array().square()).matrix());
        const Eigen::VectorXd g1 = (p.w2.transpose() * g2).cwiseProduct((1.0 - h1.array().square()).matrix());
        grads[0].noalias() += g1 * x.transpose();
        grads[1].noalias() += g2 * h1.transpose();
        grads[2].noalias() += g3 * h2.transpose();
        grads[3] += g1;
        grads[4] += g2;
        grads[5] += g3;
      }
      ++t;
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = 0; k < params.size(); ++k) slots[k].step(*params[k], grads[k] * scale, cfg.learning_rate, t);
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::divergence,
                  "toy training diverged at epoch " + std::to_string(epoch + 1) + " after " + std::to_string(t) + " steps");
    }
    p.training_curve.push_back(epoch_loss);
  }
  p.b1 = b1;
  p.b2 = b2;
  p.b3 = b3;
  return p;
}

// --- inference ----------------------------------------------------------------

/// Hard-argmax decode of each direction row.
inline std::array<Vec3, 3> hard_decode(const LogitMatrix& logits) {
  std::array<Vec3, 3> out;
  for (int c = 0; c < kComponentCount; ++c) {
    Eigen::Index best = 0;
    logits.row(c).maxCoeff(&best);
    out[static_cast<std::size_t>(c / 3)](c % 3) = bin_center(static_cast<int>(best));
  }
  return out;
}

/// Renormalizes decoded camera-frame rows, fixes Y against Z and rotates the
/// result into the world frame.
inline PredictedAction decode_toy_action(const LogitMatrix& logits, const CrayonPrompt& prompt, const Vec3& contact_3d,
                                         const CameraExtrinsics& e) {
  const auto d = hard_decode(logits);
  const Mat3 to_world = e.rotation.transpose();
  PredictedAction a;
  a.contact_px_pred = prompt.contact_px;
  a.contact_3d = contact_3d;
  const Vec3 z = d[0].norm() > 1e-9 ? Vec3(d[0].normalized()) : Vec3::UnitZ();
  const Vec3 y = d[1] - d[1].dot(z) * z;
  a.z_axis = to_world * z;
  a.y_axis = to_world * (y.norm() > 1e-6 ? Vec3(y.normalized()) : any_perpendicular(z));
  if (d[2].norm() > 1e-9) a.move_dir = to_world * d[2].normalized();
  a.move_from_prior = !prompt.move_dir.has_value();
  a.provenance = Provenance::toy_model;
  return a;
}

inline PredictedAction predict_toy(const ToyModelParams& p, const CrayonPrompt& prompt, const Observation& obs) {
  if (!obs.depth) throw Error(ErrorCode::invalid_argument, "toy model needs a depth image");
  ToySample s;
  s.prompt = prompt;
  s.intrinsics = obs.intrinsics;
  const Vec3 contact = lift(prompt.contact_px, *obs.depth, obs.intrinsics, obs.extrinsics);
  s.patch = detail::depth_patch(*obs.depth, prompt.contact_px);
  const LogitMatrix logits = p.logits(detail::toy_features(s, prompt));
  return decode_toy_action(logits, prompt, contact, obs.extrinsics);
}
class ToyPredictor final : public Predictor {
 public:
  explicit ToyPredictor(ToyModelParams params) : params_(std::move(params)) {}

  PredictedAction predict(const CrayonPrompt& prompt, const Observation& obs) const override {
    return predict_toy(params_, prompt, obs);
  }
  std::string_view name() const override { return "toy"; }
  const ToyModelParams& params() const { return params_; }

 private:
  ToyModelParams params_;
};

}  // namespace crayon
