#pragma once

#include <cmath>
#include <vector>

#include "aop/core/types.hpp"

namespace aop {

struct AdamConfig {
  Real learning_rate = 0.01;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
};

/// Adam with per-slot moment buffers. Entries whose gradient has been zero
/// since the last reset do not move.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  void reset() {
    moments_.clear();
    step_ = 0;
  }
  /// Call once per optimizer step, before the update() calls for that step.
  void next_step() { ++step_; }
  int step() const { return step_; }

  template <typename Param, typename Grad>
  void update(std::size_t slot, Eigen::MatrixBase<Param>& param, const Eigen::MatrixBase<Grad>& grad) {
    if (step_ == 0) throw StateError("Adam::update called before next_step");
    if (slot >= moments_.size()) moments_.resize(slot + 1);
    auto& [m, v] = moments_[slot];
    if (m.rows() != grad.rows() || m.cols() != grad.cols()) {
      m = Matrix::Zero(grad.rows(), grad.cols());
      v = Matrix::Zero(grad.rows(), grad.cols());
    }
    m = config_.beta1 * m + (1.0 - config_.beta1) * grad;
    v = config_.beta2 * v + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const Real c1 = 1.0 - std::pow(config_.beta1, step_);
    const Real c2 = 1.0 - std::pow(config_.beta2, step_);
    param.derived() -= (config_.learning_rate * (m / c1).array() /
                        ((v / c2).array().sqrt() + config_.epsilon)).matrix();
  }

 private:
  AdamConfig config_;
  std::vector<std::pair<Matrix, Matrix>> moments_;
  int step_ = 0;
};

}  // namespace aop
