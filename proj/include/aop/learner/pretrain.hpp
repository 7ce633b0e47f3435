#pragma once

#include <vector>

#include "aop/core/backbone.hpp"
#include "aop/learner/dataset.hpp"

namespace aop {

/// Supervised pre-training of the encoder on a source set that shares no
/// classes with any downstream stream. The result is frozen like any other
/// backbone.
struct PretrainConfig {
  int epochs = 6;
  int batch_size = 32;
  Real learning_rate = 0.002;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainReport {
  std::vector<Real> loss;      // mean per epoch
  std::vector<Real> accuracy;  // train accuracy per epoch
};

Backbone<Real> pretrain_backbone(const BackboneConfig& config, const Dataset& source, const PretrainConfig& options,
                                 PretrainReport* report = nullptr);

}  // namespace aop
