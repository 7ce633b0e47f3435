#include "aop/defenses/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aop {

namespace {

Real fraction_where(const std::vector<Real>& v, auto pred) {
  if (v.empty()) return 0;
  const auto n = std::count_if(v.begin(), v.end(), pred);
  return static_cast<Real>(n) / static_cast<Real>(v.size());
}

Dataset without_target(const Dataset& data, ClassId target) {
  Dataset out;
  for (const auto& s : data) {
    if (s.label != target) out.push_back(s);
  }
  return out;
}

}  // namespace

void DefenseReport::validate() const {
  auto rate = [](Real v) { return v >= 0 && v <= 1; };
  if (!rate(flagged_clean) || !rate(flagged_triggered)) throw InvariantError("defense: flagged fraction outside [0, 1]");
  for (Real v : clean_scores) if (!std::isfinite(v)) throw InvariantError("defense: non-finite score");
  for (Real v : triggered_scores) if (!std::isfinite(v)) throw InvariantError("defense: non-finite score");
}

Dataset canonical_overlays(Dataset overlays) {
  std::sort(overlays.begin(), overlays.end(), [](const Sample& a, const Sample& b) {
    if (a.x.size() != b.x.size()) return a.x.size() < b.x.size();
    const auto mismatch = std::mismatch(a.x.begin(), a.x.end(), b.x.begin());
    if (mismatch.first != a.x.end()) return *mismatch.first < *mismatch.second;
    return a.label < b.label;
  });
  return overlays;
}

Real strip_entropy(const ClassifierModel& model, const Image& x, const Dataset& overlay_set, int n_perturb,
                   std::uint64_t seed) {
  if (overlay_set.empty()) throw InputError("strip_entropy: empty overlay set");
  if (n_perturb < 1) throw InputError("strip_entropy: n_perturb must be at least 1");
  const Dataset overlays = canonical_overlays(overlay_set);
  Rng rng(seed);
  Real total = 0;
  for (int i = 0; i < n_perturb; ++i) {
    const Image& o = overlays[static_cast<std::size_t>(rng() % overlays.size())].x;
    if (o.size() != x.size()) throw InputError("strip_entropy: overlay shape differs from input");
    const Vector s = model.logits(0.5 * (x + o));
    const Vector p = (s.array() - s.maxCoeff()).exp();
    const Vector probs = p / p.sum();
    total += entropy(std::vector<Real>(probs.data(), probs.data() + probs.size()));
  }
  return total / static_cast<Real>(n_perturb);
}

DefenseReport strip_screen(const ClassifierModel& model, const Dataset& probes, const Dataset& overlay_set,
                           const TriggerArtifact& artifact, ClassId target, const StripOptions& options) {
  const Dataset pool = without_target(probes, target);
  if (pool.empty()) throw InputError("strip_screen: no non-target probes");
  DefenseReport report;
  report.defense = "strip";
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const std::uint64_t seed = derive_seed(options.seed, static_cast<std::uint64_t>(i));
    report.clean_scores.push_back(strip_entropy(model, pool[i].x, overlay_set, options.n_perturb, seed));
    report.triggered_scores.push_back(
        strip_entropy(model, apply_trigger_inference(pool[i].x, artifact), overlay_set, options.n_perturb, seed));
  }
  report.threshold = *std::min_element(report.clean_scores.begin(), report.clean_scores.end());
  const Real t = report.threshold;
  report.flagged_clean = fraction_where(report.clean_scores, [t](Real v) { return v < t; });
  report.flagged_triggered = fraction_where(report.triggered_scores, [t](Real v) { return v < t; });
  return report;
}

MonitorResult prompt_frequency_monitor(const ClassifierModel& model, const Dataset& suspect_batch,
                                       const Histogram& reference, Real threshold) {
  if (suspect_batch.empty()) throw InputError("prompt_frequency_monitor: empty batch");
  MonitorResult r;
  r.score = js_divergence(selection_frequency(model, suspect_batch), reference);
  r.flagged = r.score > threshold;
  return r;
}

std::vector<Real> monitor_batch_scores(const ClassifierModel& model, const Dataset& pool, const Histogram& reference,
                                       int batch_size, int batches, std::uint64_t seed,
                                       const TriggerArtifact* artifact) {
  if (batch_size < 1 || batches < 1) throw InputError("monitor_batch_scores: batch size and count must be positive");
  if (pool.size() < static_cast<std::size_t>(batch_size)) throw InputError("monitor_batch_scores: pool smaller than a batch");
  std::vector<std::size_t> order(pool.size());
  std::vector<Real> scores;
  for (int b = 0; b < batches; ++b) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    shuffle_in_place(order, rng);
    Dataset batch;
    for (int i = 0; i < batch_size; ++i) {
      Sample s = pool[order[static_cast<std::size_t>(i)]];
      if (artifact) s.x = apply_trigger_inference(s.x, *artifact);
      batch.push_back(std::move(s));
    }
    scores.push_back(js_divergence(selection_frequency(model, batch), reference));
  }
  return scores;
}

Real quantile(std::vector<Real> values, Real q) {
  if (values.empty()) throw InputError("quantile: empty sample");
  if (!(q >= 0 && q <= 1)) throw InputError("quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const Real pos = q * static_cast<Real>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<Real>(lo)) * (values[hi] - values[lo]);
}

DefenseReport frequency_screen(const ClassifierModel& model, const Dataset& reference_data, const Dataset& probe_data,
                               const TriggerArtifact& artifact, ClassId target, const MonitorOptions& options) {
  const Dataset pool = without_target(probe_data, target);
  const Histogram reference = selection_frequency(model, reference_data);
  DefenseReport report;
  report.defense = "prompt-frequency";
  const std::uint64_t clean_seed = derive_seed(options.seed, "monitor-clean");
  const std::uint64_t trig_seed = derive_seed(options.seed, "monitor-triggered");
  report.clean_scores = monitor_batch_scores(model, pool, reference, options.batch_size, options.batches, clean_seed);
  report.triggered_scores =
      monitor_batch_scores(model, pool, reference, options.batch_size, options.batches, trig_seed, &artifact);
  report.threshold = quantile(report.clean_scores, options.clean_quantile);
  const Real t = report.threshold;
  report.flagged_clean = fraction_where(report.clean_scores, [t](Real v) { return v > t; });
  report.flagged_triggered = fraction_where(report.triggered_scores, [t](Real v) { return v > t; });
  return report;
}

FinetuneResult vanilla_finetune(const Learner& model, const Dataset& clean_subset, int epochs, const Dataset& test_set,
                                const TriggerArtifact& artifact, ClassId target) {
  if (clean_subset.empty()) throw InputError("vanilla_finetune: empty clean subset");
  if (epochs < 1) throw InputError("vanilla_finetune: epochs must be at least 1");
  FinetuneResult result{model, {}};
  DefenseReport& report = result.report;
  report.defense = "vanilla-ft";
  report.acc_before = evaluate_accuracy(model, test_set);
  report.asr_before = attack_success_rate(model, test_set, artifact, target);
  result.model.train_task(clean_subset, epochs);
  report.acc_after = evaluate_accuracy(result.model, test_set);
  report.asr_after = attack_success_rate(result.model, test_set, artifact, target);
  return result;
}

}  // namespace aop
