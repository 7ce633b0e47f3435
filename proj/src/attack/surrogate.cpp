#include "aop/attack/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "aop/core/random.hpp"

namespace aop {

SurrogateSplit partition_surrogate(const Dataset& surrogate, Real split_fraction, std::uint64_t seed) {
  if (surrogate.empty()) throw InputError("partition_surrogate: empty dataset");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw InputError("partition_surrogate: split fraction must lie in (0, 1)");
  }
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < surrogate.size(); ++i) by_class[surrogate[i].label].push_back(i);

  std::vector<bool> to_static(surrogate.size(), false);
  const std::uint64_t split_seed = derive_seed(seed, "surrogate-split");
  for (auto& [label, indices] : by_class) {
    Rng rng(derive_seed(split_seed, static_cast<std::uint64_t>(label)));
    shuffle_in_place(indices, rng);
    const auto take = static_cast<std::size_t>(std::floor(split_fraction * static_cast<Real>(indices.size()) + 1e-9));
    for (std::size_t k = 0; k < take; ++k) to_static[indices[k]] = true;
  }
  SurrogateSplit split;
  split.split_fraction = split_fraction;
  for (std::size_t i = 0; i < surrogate.size(); ++i) {
    (to_static[i] ? split.static_set : split.dynamic_set).push_back(surrogate[i]);
  }
  return split;
}

TrainReport static_stage(Learner& surrogate, const SurrogateSplit& split, const Dataset& d_m, int epochs) {
  if (d_m.empty()) throw InputError("static_stage: empty target-class dataset");
  const auto target_labels = labels_of(d_m);
  if (target_labels.size() != 1) throw InputError("static_stage: D_m must hold exactly one class");
  auto classes = labels_of(concat(split.static_set, split.dynamic_set));
  if (std::find(classes.begin(), classes.end(), target_labels.front()) != classes.end()) {
    throw InputError("static_stage: target class id " + std::to_string(target_labels.front()) +
                     " collides with a surrogate class");
  }
  classes.push_back(target_labels.front());
  surrogate.register_classes(classes);
  return surrogate.train_task(concat(split.static_set, d_m), epochs);
}

TrainReport transition_stage(Learner& surrogate, const SurrogateSplit& split, int epochs) {
  if (surrogate.tasks_trained() == 0) throw StateError("transition_stage: static stage has not run");
  if (split.dynamic_set.empty()) throw InputError("transition_stage: empty dynamic set");
  surrogate.register_classes(labels_of(split.dynamic_set));
  return surrogate.train_task(split.dynamic_set, epochs);
}

TriggerArtifact dynamic_rounds(Learner& surrogate, const SurrogateSplit& split, const Dataset& d_m,
                               TriggerArtifact artifact, const DynamicOptions& options,
                               std::vector<DynamicRound>* log, std::vector<TriggerStep>* steps) {
  if (options.rounds < 1) throw InputError("dynamic_rounds: rounds must be at least 1");
  if (options.prompt_epochs_per_round < 1) throw InputError("dynamic_rounds: prompt epochs must be at least 1");
  if (split.dynamic_set.empty()) throw InputError("dynamic_rounds: empty dynamic set");
  TriggerOptions trigger_options{options.trigger_iterations_per_round, options.learning_rate, options.loss_mode};
  for (int r = 0; r < options.rounds; ++r) {
    DynamicRound entry;
    entry.round = r;
    entry.loss_before_trigger =
        trigger_objective(surrogate, d_m, artifact.delta, artifact.target_class, options.loss_mode);
    artifact = optimize_trigger(surrogate, d_m, std::move(artifact), trigger_options, steps);
    entry.loss_after_trigger =
        trigger_objective(surrogate, d_m, artifact.delta, artifact.target_class, options.loss_mode);
    surrogate.train_task(split.dynamic_set, options.prompt_epochs_per_round);
    entry.loss_after_prompts =
        trigger_objective(surrogate, d_m, artifact.delta, artifact.target_class, options.loss_mode);
    entry.linf = artifact.linf_norm();
    artifact.check_bound();
    ++artifact.rounds;
    if (log) log->push_back(entry);
  }
  return artifact;
}

}  // namespace aop
