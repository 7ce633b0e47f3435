#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aop/attack/poison.hpp"
#include "aop/attack/surrogate.hpp"

namespace aop {

struct AopConfig {
  LearnerConfig surrogate{};
  Real split_fraction = 0.5;
  int static_epochs = 5;
  TriggerOptions static_trigger{100, 0.01, LossMode::softmax_ce};
  int transition_epochs = 5;
  DynamicOptions dynamic{};
  /// Stop after the static trigger pass (stages 3 and 4 skipped).
  bool skip_dynamic = false;
  Real epsilon = kDefaultEpsilon;
  Real amplification = kDefaultAmplification;
  Real poison_rate = 0.25;
  std::optional<std::size_t> poison_count;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Everything the attacker may touch: its own class data and a surrogate
/// dataset. The victim's other classes are structurally out of reach.
struct AttackInputs {
  Dataset target_data;     // D_m
  Dataset surrogate_data;  // D_surrogate
  ClassId target_class = 0;
  std::shared_ptr<const Backbone<Real>> backbone;
};

struct AopLog {
  TrainReport static_training;
  TrainReport transition_training;
  std::vector<TriggerStep> static_steps;
  std::vector<TriggerStep> dynamic_steps;
  std::vector<DynamicRound> rounds;
  /// Trigger after every stage and round, in execution order.
  std::vector<Image> delta_snapshots;
  /// Surrogate selection histograms over D_m (clean) and D_m + delta, per stage.
  std::map<std::string, std::vector<long>> selection_clean;
  std::map<std::string, std::vector<long>> selection_triggered;
  std::map<std::string, double> stage_seconds;
  std::uint64_t backbone_fingerprint = 0;
};

struct AopResult {
  TriggerArtifact trigger;         // final trigger
  TriggerArtifact static_trigger;  // after the static pass only
  PoisonedDataset poisoned;
  AopLog log;
};

/// Stages (0)-(4) in order followed by poisoning of D_m.
AopResult run_aop(const AopConfig& config, const AttackInputs& inputs);

}  // namespace aop
