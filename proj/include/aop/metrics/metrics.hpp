#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "aop/attack/trigger.hpp"
#include "aop/learner/dataset.hpp"

namespace aop {

using Histogram = std::vector<long>;

/// Fraction of triggered non-target samples predicted as the target.
Real attack_success_rate(const ClassifierModel& model, const Dataset& test_set, const TriggerArtifact& artifact,
                         ClassId target);

/// Mean of the first t entries (t is 1-based).
Real averaged_history(const std::vector<Real>& values, std::size_t t);

/// Fraction of triggered non-target samples whose top-k predictions include
/// the target. Zero when the target is not a registered class.
Real clean_model_asr(const ClassifierModel& clean_model, const Dataset& test_set, const TriggerArtifact& artifact,
                     ClassId target, int k);

/// Counts of every selected prompt id over the dataset; triggered inputs go
/// through the inference trigger first.
Histogram selection_frequency(const ClassifierModel& model, const Dataset& data,
                              const TriggerArtifact* artifact = nullptr);

struct SimilarityMap {
  std::vector<ClassId> classes;  // one row per class, ascending
  Matrix mean_similarity;        // classes x prompts
};

/// Mean key-query cosine similarity per class and prompt.
SimilarityMap key_query_similarity_map(const ClassifierModel& model, const Dataset& data,
                                       const TriggerArtifact* artifact = nullptr);

/// Normalizes counts to a probability vector; an all-zero histogram is an input error.
std::vector<Real> normalize(const Histogram& h);

/// Shannon entropy in nats.
Real entropy(const std::vector<Real>& p);
Real entropy(const Histogram& h);

/// Jensen-Shannon divergence in nats, bounded by ln 2.
Real js_divergence(const Histogram& a, const Histogram& b);

/// Per-checkpoint evaluation of one learner run.
struct TaskRecord {
  int task = 0;                  // 1-based
  std::vector<Real> acc_per_task;  // accuracy on tasks 1..t after training task t
  std::vector<Real> asr_per_task;  // empty before the target class exists
  Real acc_avg = 0;
  Real asr_avg = 0;
  Histogram selection_clean;
  Histogram selection_triggered;
  SimilarityMap similarity_clean;
  SimilarityMap similarity_triggered;
};

struct RunMetrics {
  std::vector<TaskRecord> records;
  Real clean_top1_asr = 0;
  Real clean_top5_asr = 0;
  bool has_clean_asr = false;

  std::vector<Real> acc_history() const;
  std::vector<Real> asr_history() const;
  void validate() const;
};

/// Evaluates the learner after task t (1-based) on the test sets of tasks 1..t.
TaskRecord evaluate_checkpoint(const ClassifierModel& model, const ContinualTaskStream& stream, int t,
                               const TriggerArtifact* artifact, ClassId target);

/// task,acc_avg,asr_avg,acc_task,asr_task with acc_task/asr_task the values
/// on the newest task's test set.
void write_metrics_csv(std::ostream& out, const RunMetrics& metrics);
void write_histogram_csv(std::ostream& out, const Histogram& clean, const Histogram& triggered);
void write_similarity_csv(std::ostream& out, const SimilarityMap& map);

}  // namespace aop
