#include "aop/attack/poison.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "aop/core/random.hpp"

namespace aop {

PoisonPlan make_poison_plan(std::size_t n, ClassId target, Real rate, std::uint64_t seed,
                            std::optional<std::size_t> absolute_count) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InputError("poison rate must lie in [0, 1]");
  std::size_t count = static_cast<std::size_t>(std::floor(rate * static_cast<Real>(n) + 1e-9));
  if (absolute_count) {
    if (*absolute_count > n) throw InputError("poison count exceeds the target-class dataset size");
    count = *absolute_count;
  }
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "poison-plan"));
  shuffle_in_place(indices, rng);
  PoisonPlan plan;
  plan.target_class = target;
  plan.total = n;
  plan.selected.assign(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(plan.selected.begin(), plan.selected.end());
  plan.poison_rate = n ? static_cast<Real>(count) / static_cast<Real>(n) : 0.0;
  return plan;
}

PoisonedDataset poison_dataset(const Dataset& d_m, const TriggerArtifact& artifact, const PoisonPlan& plan) {
  if (plan.total != d_m.size()) throw InputError("poison plan was made for a different dataset size");
  for (std::size_t i = 0; i < plan.selected.size(); ++i) {
    if (plan.selected[i] >= d_m.size()) throw InputError("poison plan index " + std::to_string(plan.selected[i]) + " out of range");
    if (i > 0 && plan.selected[i] <= plan.selected[i - 1]) throw InputError("poison plan indices must be strictly ascending");
  }
  artifact.check_bound();
  PoisonedDataset out;
  out.plan = plan;
  out.samples = d_m;
  for (std::size_t idx : plan.selected) {
    auto& s = out.samples[idx];
    if (s.x.size() != artifact.delta.size()) throw InputError("poison_dataset: sample/trigger shape mismatch");
    s.x = (s.x + artifact.delta).cwiseMax(0.0).cwiseMin(1.0);
  }
  return out;
}

}  // namespace aop
