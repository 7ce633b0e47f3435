#pragma once

#include <memory>
#include <vector>

#include "aop/core/losses.hpp"
#include "aop/core/prompted_model.hpp"
#include "aop/core/snapshot.hpp"
#include "aop/learner/adam.hpp"
#include "aop/learner/dataset.hpp"

namespace aop {

struct LearnerConfig {
  int pool_size = 10;
  int prompt_length = 4;
  int top_k = 1;
  /// Weight of the key-pull term that draws selected keys toward queries.
  Real lambda = 0.5;
  Real learning_rate = 0.01;
  int epochs = 5;
  int batch_size = 16;
  LossMode loss_mode = LossMode::softmax_ce;
  /// Restrict the classification loss to the classes present in the
  /// current task's data (inference always uses every registered class).
  bool mask_current_task = true;
  bool train_keys = true;
  bool train_prompts = true;
  bool train_head = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// How prompts are picked for one input. L2P-style top-k routing is the only
/// implementation; other prompt-based learners would plug in here.
class PromptingStrategy {
 public:
  virtual ~PromptingStrategy() = default;
  virtual PromptSelection<Real> select(const PromptPool<Real>& pool, const Vector& query) const = 0;
};

class TopKPromptingStrategy final : public PromptingStrategy {
 public:
  PromptSelection<Real> select(const PromptPool<Real>& pool, const Vector& query) const override {
    return select_prompts(pool, query);
  }
};

struct EpochStats {
  Real objective = 0;            // classification loss minus the key-pull term
  Real classification_loss = 0;
  Real mean_selected_similarity = 0;
  Real train_accuracy = 0;       // over the loss-active classes
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

/// Trainable parameter gradients for one objective evaluation.
struct LearnerGradients {
  Matrix keys;
  std::vector<Matrix> prompts;
  Matrix head_weight;
  Vector head_bias;
  Real objective = 0;
  Real classification_loss = 0;
  Real similarity_sum = 0;
  bool correct = false;
};

/// Prompt-based class-incremental learner over a frozen backbone. Only the
/// prompt pool and the class head are trainable.
class Learner final : public ClassifierModel {
 public:
  Learner(std::shared_ptr<const Backbone<Real>> backbone, LearnerConfig config,
          std::shared_ptr<const PromptingStrategy> strategy = nullptr);

  const LearnerConfig& config() const { return config_; }
  LearnerConfig& mutable_config() { return config_; }
  const Backbone<Real>& backbone() const { return *backbone_; }
  std::shared_ptr<const Backbone<Real>> shared_backbone() const { return backbone_; }
  const PromptPool<Real>& pool() const { return pool_; }
  PromptPool<Real>& pool() { return pool_; }
  const ClassHead<Real>& head() const { return head_; }
  ClassHead<Real>& head() { return head_; }
  int tasks_trained() const { return tasks_trained_; }

  ModelSnapshot snapshot() const;
  /// Rebuilds a learner from a snapshot; the snapshot's pool size, prompt
  /// length and top-k override `config`.
  static Learner restore(const ModelSnapshot& snapshot, LearnerConfig config);

  /// Extends the head with zero columns for unseen ids.
  void register_classes(const std::vector<ClassId>& ids) { head_.register_classes(ids); }

  /// One task of training on `data`. Every label must already be
  /// registered (StateError otherwise); empty data or epochs < 1 is an
  /// InputError.
  TrainReport train_task(const Dataset& data, int epochs);
  TrainReport train_task(const Dataset& data) { return train_task(data, config_.epochs); }

  PromptedOutput<Real> forward(const Image& x, Backbone<Real>::Trace* trace = nullptr,
                               const Vector* query = nullptr) const;

  /// Objective and gradients for one sample. `active_columns` lists the head
  /// columns that take part in the classification loss.
  LearnerGradients sample_gradients(const Sample& sample, const std::vector<int>& active_columns,
                                    const Vector* query = nullptr) const;

  Real sample_objective(const Sample& sample, const std::vector<int>& active_columns) const;

  // ClassifierModel
  Vector logits(const Image& x) const override;
  const std::vector<ClassId>& class_ids() const override { return head_.classes; }
  int pool_size() const override { return pool_.size(); }
  PromptSelection<Real> select(const Image& x) const override;
  Vector key_similarities(const Image& x) const override;

 private:
  std::vector<int> active_columns_for(const Dataset& data) const;

  std::shared_ptr<const Backbone<Real>> backbone_;
  std::shared_ptr<const PromptingStrategy> strategy_;
  LearnerConfig config_;
  PromptPool<Real> pool_;
  ClassHead<Real> head_;
  int tasks_trained_ = 0;
};

/// Fraction of correct predictions. Empty data is an InputError.
Real evaluate_accuracy(const ClassifierModel& model, const Dataset& data);

/// Per-class recall of `id` on `data`.
Real class_recall(const ClassifierModel& model, const Dataset& data, ClassId id);

}  // namespace aop
