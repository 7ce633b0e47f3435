#pragma once

#include <string>
#include <vector>

#include "aop/metrics/metrics.hpp"

namespace aop {

struct DefenseReport {
  std::string defense;
  std::vector<Real> clean_scores;
  std::vector<Real> triggered_scores;
  Real threshold = 0;
  Real flagged_clean = 0;      // fraction of clean scores above threshold
  Real flagged_triggered = 0;  // fraction of triggered scores above threshold
  // Fine-tuning only.
  Real acc_before = 0, acc_after = 0;
  Real asr_before = 0, asr_after = 0;

  void validate() const;
};

/// Orders overlays by pixel content so results do not depend on input order.
Dataset canonical_overlays(Dataset overlays);

/// Mean Shannon entropy (nats) of the softmax prediction over n_perturb
/// equal-weight blends of x with seeded draws from the overlay set.
Real strip_entropy(const ClassifierModel& model, const Image& x, const Dataset& overlay_set, int n_perturb,
                   std::uint64_t seed);

struct StripOptions {
  int n_perturb = 16;
  std::uint64_t seed = 0;
};

/// Entropies of clean and triggered versions of the probe inputs. Low
/// entropy is suspicious, so flagging uses entropy below the threshold,
/// taken as the minimum clean entropy.
DefenseReport strip_screen(const ClassifierModel& model, const Dataset& probes, const Dataset& overlay_set,
                           const TriggerArtifact& artifact, ClassId target, const StripOptions& options);

struct MonitorResult {
  Real score = 0;  // JS divergence to the reference, nats
  bool flagged = false;
};

MonitorResult prompt_frequency_monitor(const ClassifierModel& model, const Dataset& suspect_batch,
                                       const Histogram& reference, Real threshold);

/// Scores of seeded batches drawn without replacement from `pool`, each
/// optionally triggered.
std::vector<Real> monitor_batch_scores(const ClassifierModel& model, const Dataset& pool, const Histogram& reference,
                                       int batch_size, int batches, std::uint64_t seed,
                                       const TriggerArtifact* artifact = nullptr);

/// Linear-interpolated quantile, q in [0, 1].
Real quantile(std::vector<Real> values, Real q);

struct MonitorOptions {
  int batch_size = 32;
  int batches = 200;
  Real clean_quantile = 0.95;
  std::uint64_t seed = 0;
};

/// Reference histogram from `reference_data`; threshold calibrated on clean
/// batches from `probe_data`; triggered batches drawn from the same probes.
DefenseReport frequency_screen(const ClassifierModel& model, const Dataset& reference_data, const Dataset& probe_data,
                               const TriggerArtifact& artifact, ClassId target, const MonitorOptions& options);

/// Fine-tunes a copy of the learner on clean data from seen tasks.
struct FinetuneResult {
  Learner model;
  DefenseReport report;
};

FinetuneResult vanilla_finetune(const Learner& model, const Dataset& clean_subset, int epochs, const Dataset& test_set,
                                const TriggerArtifact& artifact, ClassId target);

}  // namespace aop
