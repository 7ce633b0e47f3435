#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "aop/core/losses.hpp"
#include "aop/learner/learner.hpp"

namespace aop {

inline constexpr Real kDefaultEpsilon = 16.0 / 255.0;
inline constexpr Real kDefaultAmplification = 3.0;

/// Universal additive trigger with an l-infinity bound.
struct TriggerArtifact {
  ImageShape shape{};
  Image delta;
  Real epsilon = kDefaultEpsilon;
  Real amplification = kDefaultAmplification;
  LossMode loss_mode = LossMode::sigmoid_bce;
  ClassId target_class = 0;
  std::uint64_t seed = 0;
  int iterations = 0;  // trigger steps taken so far
  int rounds = 0;      // dynamic rounds completed
  Real learning_rate = 0.01;

  /// Zero trigger for `shape`.
  static TriggerArtifact zeros(const ImageShape& shape, ClassId target, Real epsilon = kDefaultEpsilon,
                               Real amplification = kDefaultAmplification);

  Real linf_norm() const { return delta.size() ? delta.cwiseAbs().maxCoeff() : 0.0; }

  /// Throws InvariantError if delta is non-finite or leaves the ball.
  void check_bound() const;
};

/// Elementwise clamp to [-epsilon, epsilon].
template <typename Derived>
VectorX<typename Derived::Scalar> project_linf(const Eigen::MatrixBase<Derived>& delta,
                                               typename Derived::Scalar epsilon) {
  if (!(epsilon > 0)) throw InputError("project_linf: epsilon must be positive");
  return delta.cwiseMax(-epsilon).cwiseMin(epsilon);
}

/// Trigger loss on one logit vector; `target` is a column index.
Real trigger_loss(const Vector& logits, Eigen::Index target, LossMode mode);
Vector trigger_loss_gradient(const Vector& logits, Eigen::Index target, LossMode mode);

/// Sum over `d_m` of the trigger loss of the surrogate on clip(x + delta).
/// Prompts are selected from q(x + delta); the gradient (if requested)
/// flows to delta only, through the prompted pass.
Real trigger_objective(const Learner& surrogate, const Dataset& d_m, const Image& delta,
                       ClassId target, LossMode mode, Image* grad = nullptr);

struct TriggerStep {
  int iteration = 0;
  Real loss = 0;      // objective before the step
  Real linf = 0;      // after projection
};

struct TriggerOptions {
  int iterations = 100;
  Real learning_rate = 0.01;
  LossMode loss_mode = LossMode::softmax_ce;
};

/// Projected adaptive-moment descent on delta. Every step is followed by
/// projection onto the epsilon ball and an explicit bound check.
TriggerArtifact optimize_trigger(const Learner& surrogate, const Dataset& d_m, TriggerArtifact artifact,
                                 const TriggerOptions& options,
                                 std::vector<TriggerStep>* log = nullptr);

/// clip(x + amplification * delta, 0, 1).
Image apply_trigger_inference(const Image& x, const TriggerArtifact& artifact);

/// Binary trigger file: magic "AOPTRIG1", u32 channels/height/width,
/// f32 epsilon, f32 amplification, u32 loss mode (0 ce, 1 bce), i64 target,
/// u64 seed, u32 iterations, u32 rounds, f32 learning rate, then the flat
/// little-endian float32 delta.
void save_trigger(const std::filesystem::path& path, const TriggerArtifact& artifact);
TriggerArtifact load_trigger(const std::filesystem::path& path);

}  // namespace aop
