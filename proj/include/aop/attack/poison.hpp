#pragma once

#include <optional>
#include <vector>

#include "aop/attack/trigger.hpp"

namespace aop {

/// Which samples of the target-class data D_m carry the trigger.
struct PoisonPlan {
  ClassId target_class = 0;
  Real poison_rate = 0;                // |D_s| / |D_m|
  std::vector<std::size_t> selected;   // indices into D_m, ascending, no duplicates
  std::size_t total = 0;               // |D_m|

  std::size_t poisoned_count() const { return selected.size(); }  // |D_b|
  std::size_t clean_count() const { return total - selected.size(); }  // |D_c|
};

/// floor(rate * n) indices drawn without replacement, unless `absolute_count`
/// pins the number directly.
PoisonPlan make_poison_plan(std::size_t dataset_size, ClassId target, Real rate, std::uint64_t seed,
                            std::optional<std::size_t> absolute_count = std::nullopt);

struct PoisonedDataset {
  Dataset samples;  // D_p = D_c u D_b, in D_m order
  PoisonPlan plan;
};

/// Replaces the planned samples by clip(x + delta, 0, 1); labels are kept.
PoisonedDataset poison_dataset(const Dataset& d_m, const TriggerArtifact& artifact, const PoisonPlan& plan);

}  // namespace aop
