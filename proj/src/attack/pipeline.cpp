#include "aop/attack/pipeline.hpp"

#include <chrono>

namespace aop {

namespace {

class StageTimer {
 public:
  StageTimer(AopLog& log, std::string name)
      : log_(log), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    log_.stage_seconds[name_] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  AopLog& log_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

void record_selection(AopLog& log, const std::string& stage, const Learner& surrogate, const Dataset& d_m,
                      const TriggerArtifact* trigger) {
  std::vector<long> clean(static_cast<std::size_t>(surrogate.pool_size()), 0);
  std::vector<long> triggered(clean.size(), 0);
  for (const auto& s : d_m) {
    for (int i : surrogate.select(s.x).indices) ++clean[static_cast<std::size_t>(i)];
    if (trigger) {
      const Image x = (s.x + trigger->delta).cwiseMax(0.0).cwiseMin(1.0);
      for (int i : surrogate.select(x).indices) ++triggered[static_cast<std::size_t>(i)];
    }
  }
  log.selection_clean[stage] = std::move(clean);
  if (trigger) log.selection_triggered[stage] = std::move(triggered);
}

}  // namespace

void AopConfig::validate() const {
  surrogate.validate();
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("attack: split fraction must lie in (0, 1)");
  if (static_epochs < 1 || transition_epochs < 1) throw ConfigError("attack: stage epochs must be positive");
  if (static_trigger.iterations < 1) throw ConfigError("attack: static trigger iterations must be positive");
  if (!skip_dynamic && dynamic.rounds < 1) throw ConfigError("attack: dynamic rounds must be positive");
  if (!(epsilon > 0)) throw ConfigError("attack: epsilon must be positive");
  if (!(amplification >= 0)) throw ConfigError("attack: amplification must be non-negative");
  if (!(poison_rate >= 0 && poison_rate <= 1)) throw ConfigError("attack: poison rate must lie in [0, 1]");
}

AopResult run_aop(const AopConfig& config, const AttackInputs& inputs) {
  config.validate();
  if (!inputs.backbone) throw InputError("run_aop: no backbone");
  if (inputs.target_data.empty()) throw InputError("run_aop: empty target-class dataset");
  for (const auto& s : inputs.target_data) {
    if (s.label != inputs.target_class) throw InputError("run_aop: D_m holds a non-target label");
  }

  AopResult result;
  AopLog& log = result.log;
  log.backbone_fingerprint = inputs.backbone->fingerprint();
  const Dataset& d_m = inputs.target_data;

  SurrogateSplit split;
  {
    StageTimer timer(log, "0-partition");
    split = partition_surrogate(inputs.surrogate_data, config.split_fraction, config.seed);
  }

  LearnerConfig surrogate_config = config.surrogate;
  surrogate_config.seed = derive_seed(config.seed, "surrogate-learner");
  Learner surrogate(inputs.backbone, surrogate_config);
  {
    StageTimer timer(log, "1-static-surrogate");
    log.static_training = static_stage(surrogate, split, d_m, config.static_epochs);
  }

  TriggerArtifact trigger = TriggerArtifact::zeros(inputs.backbone->image_shape(),
                                                   inputs.target_class, config.epsilon, config.amplification);
  trigger.seed = config.seed;
  {
    StageTimer timer(log, "2-static-trigger");
    trigger = optimize_trigger(surrogate, d_m, std::move(trigger), config.static_trigger, &log.static_steps);
  }
  log.delta_snapshots.push_back(trigger.delta);
  record_selection(log, "static", surrogate, d_m, &trigger);
  result.static_trigger = trigger;

  if (!config.skip_dynamic) {
    {
      StageTimer timer(log, "3-transition");
      log.transition_training = transition_stage(surrogate, split, config.transition_epochs);
    }
    record_selection(log, "transition", surrogate, d_m, &trigger);
    {
      StageTimer timer(log, "4-dynamic");
      std::vector<DynamicRound> rounds;
      for (int r = 0; r < config.dynamic.rounds; ++r) {
        DynamicOptions one = config.dynamic;
        one.rounds = 1;
        trigger = dynamic_rounds(surrogate, split, d_m, std::move(trigger), one, &rounds, &log.dynamic_steps);
        rounds.back().round = r;
        log.delta_snapshots.push_back(trigger.delta);
      }
      log.rounds = std::move(rounds);
    }
    record_selection(log, "dynamic", surrogate, d_m, &trigger);
  }
  for (const auto& snapshot : log.delta_snapshots) {
    if (snapshot.cwiseAbs().maxCoeff() > config.epsilon) throw InvariantError("logged trigger snapshot leaves the epsilon ball");
  }
  if (inputs.backbone->fingerprint() != log.backbone_fingerprint) {
    throw InvariantError("backbone changed during the attack");
  }

  result.trigger = trigger;
  const PoisonPlan plan = make_poison_plan(d_m.size(), inputs.target_class, config.poison_rate,
                                           derive_seed(config.seed, "poison"), config.poison_count);
  result.poisoned = poison_dataset(d_m, trigger, plan);
  return result;
}

}  // namespace aop
