#pragma once

#include <vector>

#include "aop/attack/trigger.hpp"

namespace aop {

struct SurrogateSplit {
  Dataset static_set;
  Dataset dynamic_set;
  Real split_fraction = 0.5;
};

/// Seeded class-stratified split: floor(fraction * n_c) samples of every
/// class go to the static half, the rest to the dynamic half. Original
/// order is preserved inside each half.
SurrogateSplit partition_surrogate(const Dataset& surrogate, Real split_fraction, std::uint64_t seed);

/// Registers the static classes plus the target class and trains the
/// surrogate on D_static u D_m. Throws InputError if the target id collides
/// with a surrogate class.
TrainReport static_stage(Learner& surrogate, const SurrogateSplit& split, const Dataset& d_m, int epochs);

/// Continues prompt tuning on D_dynamic.
TrainReport transition_stage(Learner& surrogate, const SurrogateSplit& split, int epochs);

struct DynamicRound {
  int round = 0;
  Real loss_before_trigger = 0;   // objective at the start of the round
  Real loss_after_trigger = 0;    // after the trigger update
  Real loss_after_prompts = 0;    // after the prompt epoch(s)
  Real linf = 0;
};

struct DynamicOptions {
  int rounds = 10;
  int trigger_iterations_per_round = 20;
  int prompt_epochs_per_round = 1;
  Real learning_rate = 0.01;
  LossMode loss_mode = LossMode::sigmoid_bce;
};

/// Alternates trigger updates with prompt epochs on D_dynamic.
TriggerArtifact dynamic_rounds(Learner& surrogate, const SurrogateSplit& split, const Dataset& d_m,
                               TriggerArtifact artifact, const DynamicOptions& options,
                               std::vector<DynamicRound>* log = nullptr,
                               std::vector<TriggerStep>* steps = nullptr);

}  // namespace aop
