#include "aop/learner/learner.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace aop {

void LearnerConfig::validate() const {
  if (pool_size < 1 || prompt_length < 1) throw ConfigError("learner: pool_size and prompt_length must be positive");
  if (top_k < 1 || top_k > pool_size) throw ConfigError("learner: top_k must lie in [1, pool_size]");
  if (!(lambda >= 0.0)) throw ConfigError("learner: lambda must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learner: learning_rate must be positive");
  if (epochs < 1 || batch_size < 1) throw ConfigError("learner: epochs and batch_size must be positive");
}

Learner::Learner(std::shared_ptr<const Backbone<Real>> backbone, LearnerConfig config,
                 std::shared_ptr<const PromptingStrategy> strategy)
    : backbone_(std::move(backbone)),
      strategy_(strategy ? std::move(strategy) : std::make_shared<TopKPromptingStrategy>()),
      config_(config) {
  if (!backbone_) throw InputError("learner needs a backbone");
  config_.validate();
  pool_ = PromptPool<Real>(config_.pool_size, config_.prompt_length, backbone_->feature_dim(),
                           config_.top_k, derive_seed(config_.seed, "learner-pool"));
  head_ = ClassHead<Real>(backbone_->feature_dim());
}

PromptedOutput<Real> Learner::forward(const Image& x, Backbone<Real>::Trace* trace,
                                      const Vector* query) const {
  if (head_.empty()) throw StateError("learner has no registered classes");
  PromptedOutput<Real> out;
  out.query = query ? *query : backbone_->query(x);
  out.selection = strategy_->select(pool_, out.query);
  out.feature = backbone_->forward(x, pool_.gather(out.selection.indices), trace);
  out.logits = head_.logits(out.feature);
  return out;
}

Vector Learner::logits(const Image& x) const {
  if (tasks_trained_ == 0) throw StateError("learner has not been trained on any task");
  return forward(x).logits;
}

PromptSelection<Real> Learner::select(const Image& x) const {
  return strategy_->select(pool_, backbone_->query(x));
}

Vector Learner::key_similarities(const Image& x) const {
  return aop::key_similarities(pool_, backbone_->query(x));
}

std::vector<int> Learner::active_columns_for(const Dataset& data) const {
  std::vector<int> cols;
  if (config_.mask_current_task) {
    for (ClassId id : labels_of(data)) cols.push_back(head_.column_of(id));
  } else {
    cols.resize(static_cast<std::size_t>(head_.num_classes()));
    std::iota(cols.begin(), cols.end(), 0);
  }
  return cols;
}

LearnerGradients Learner::sample_gradients(const Sample& sample, const std::vector<int>& active,
                                           const Vector* query) const {
  const int target_col = head_.column_of(sample.label);
  const auto target_it = std::find(active.begin(), active.end(), target_col);
  if (target_col < 0 || target_it == active.end()) {
    throw StateError("label " + std::to_string(sample.label) + " is not an active registered class");
  }
  Backbone<Real>::Trace trace;
  const auto out = forward(sample.x, &trace, query);

  Vector active_logits(static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) active_logits(static_cast<Eigen::Index>(i)) = out.logits(active[i]);
  const auto loss = classification_loss(active_logits, target_it - active.begin(), config_.loss_mode);

  LearnerGradients g;
  g.classification_loss = loss.loss;
  Eigen::Index best = 0;
  active_logits.maxCoeff(&best);
  g.correct = active[static_cast<std::size_t>(best)] == target_col;
  g.head_weight = Matrix::Zero(head_.feature_dim(), head_.num_classes());
  g.head_bias = Vector::Zero(head_.num_classes());
  Vector grad_feature = Vector::Zero(head_.feature_dim());
  for (std::size_t i = 0; i < active.size(); ++i) {
    const Real gi = loss.gradient(static_cast<Eigen::Index>(i));
    g.head_weight.col(active[i]) = gi * out.feature;
    g.head_bias(active[i]) = gi;
    grad_feature += gi * head_.weight.col(active[i]);
  }

  g.prompts.assign(static_cast<std::size_t>(pool_.size()), Matrix());
  g.keys = Matrix::Zero(pool_.size(), pool_.feature_dim());
  const auto input_grads = backbone_->backward(trace, grad_feature);
  const Eigen::Index len = pool_.prompt_length();
  for (std::size_t s = 0; s < out.selection.indices.size(); ++s) {
    const int idx = out.selection.indices[s];
    auto& gp = g.prompts[static_cast<std::size_t>(idx)];
    if (gp.size() == 0) gp = Matrix::Zero(len, pool_.feature_dim());
    gp += input_grads.prompts.middleRows(static_cast<Eigen::Index>(s) * len, len);
    g.keys.row(idx) -= config_.lambda *
        cosine_similarity_grad_wrt_second(out.query, pool_.keys.row(idx).transpose()).transpose();
    g.similarity_sum += out.selection.similarities[s];
  }
  g.objective = g.classification_loss - config_.lambda * g.similarity_sum;
  return g;
}

Real Learner::sample_objective(const Sample& sample, const std::vector<int>& active) const {
  const int target_col = head_.column_of(sample.label);
  const auto target_it = std::find(active.begin(), active.end(), target_col);
  if (target_col < 0 || target_it == active.end()) throw StateError("label is not an active registered class");
  const auto out = forward(sample.x);
  Vector active_logits(static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) active_logits(static_cast<Eigen::Index>(i)) = out.logits(active[i]);
  const Real sims = std::accumulate(out.selection.similarities.begin(), out.selection.similarities.end(), 0.0);
  return classification_loss(active_logits, target_it - active.begin(), config_.loss_mode).loss -
         config_.lambda * sims;
}

TrainReport Learner::train_task(const Dataset& data, int epochs) {
  if (data.empty()) throw InputError("train_task: empty task dataset");
  if (epochs < 1) throw InputError("train_task: epochs must be at least 1");
  for (const auto& s : data) {
    if (!head_.contains(s.label)) {
      throw StateError("train_task: label " + std::to_string(s.label) + " is not registered");
    }
  }
  const std::vector<int> active = active_columns_for(data);

  std::vector<Vector> queries;
  queries.reserve(data.size());
  for (const auto& s : data) queries.push_back(backbone_->query(s.x));

  Adam adam(AdamConfig{config_.learning_rate});
  const std::uint64_t task_seed = derive_seed(derive_seed(config_.seed, "shuffle"),
                                              static_cast<std::uint64_t>(tasks_trained_));
  const std::size_t n = data.size();
  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  TrainReport report;
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(task_seed, static_cast<std::uint64_t>(epoch)));
    shuffle_in_place(order, rng);

    EpochStats stats;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const Real scale = 1.0 / static_cast<Real>(stop - start);
      Matrix g_keys = Matrix::Zero(pool_.size(), pool_.feature_dim());
      std::vector<Matrix> g_prompts(static_cast<std::size_t>(pool_.size()),
                                    Matrix::Zero(pool_.prompt_length(), pool_.feature_dim()));
      Matrix g_weight = Matrix::Zero(head_.feature_dim(), head_.num_classes());
      Vector g_bias = Vector::Zero(head_.num_classes());
      for (std::size_t i = start; i < stop; ++i) {
        const auto g = sample_gradients(data[order[i]], active, &queries[order[i]]);
        g_keys += g.keys;
        for (std::size_t p = 0; p < g.prompts.size(); ++p)
          if (g.prompts[p].size() > 0) g_prompts[p] += g.prompts[p];
        g_weight += g.head_weight;
        g_bias += g.head_bias;
        stats.objective += g.objective;
        stats.classification_loss += g.classification_loss;
        stats.mean_selected_similarity += g.similarity_sum / static_cast<Real>(pool_.top_k);
        correct += g.correct ? 1 : 0;
      }
      adam.next_step();
      std::size_t slot = 0;
      if (config_.train_keys) {
        g_keys *= scale;
        adam.update(slot, pool_.keys, g_keys);
      }
      ++slot;
      for (std::size_t p = 0; p < g_prompts.size(); ++p, ++slot) {
        if (!config_.train_prompts) continue;
        g_prompts[p] *= scale;
        adam.update(slot, pool_.prompts[p], g_prompts[p]);
      }
      if (config_.train_head) {
        g_weight *= scale;
        g_bias *= scale;
        adam.update(slot, head_.weight, g_weight);
        adam.update(slot + 1, head_.bias, g_bias);
      }
    }
    const Real inv_n = 1.0 / static_cast<Real>(n);
    stats.objective *= inv_n;
    stats.classification_loss *= inv_n;
    stats.mean_selected_similarity *= inv_n;
    stats.train_accuracy = static_cast<Real>(correct) * inv_n;
    report.epochs.push_back(stats);
  }
  ++tasks_trained_;
  return report;
}

ModelSnapshot Learner::snapshot() const {
  ModelSnapshot s;
  s.backbone = backbone_->config();
  s.backbone_weights = backbone_->parameters();
  s.backbone_fingerprint = backbone_->fingerprint();
  s.pool = pool_;
  s.head = head_;
  s.trained_tasks = {tasks_trained_};
  return s;
}

Learner Learner::restore(const ModelSnapshot& s, LearnerConfig config) {
  config.pool_size = s.pool.size();
  config.prompt_length = static_cast<int>(s.pool.prompt_length());
  config.top_k = s.pool.top_k;
  Learner learner(std::make_shared<const Backbone<Real>>(s.backbone, s.backbone_weights), config);
  if (learner.backbone().fingerprint() != s.backbone_fingerprint) {
    throw ValidationError("snapshot backbone does not match its fingerprint");
  }
  if (s.pool.feature_dim() != learner.backbone().feature_dim() || s.head.feature_dim() != learner.backbone().feature_dim()) {
    throw ValidationError("snapshot pool/head width does not match the backbone");
  }
  learner.pool_ = s.pool;
  learner.head_ = s.head;
  learner.tasks_trained_ = s.trained_tasks.empty() ? 0 : static_cast<int>(s.trained_tasks.front());
  return learner;
}

Real evaluate_accuracy(const ClassifierModel& model, const Dataset& data) {
  if (data.empty()) throw InputError("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const auto& s : data) correct += model.predict(s.x) == s.label ? 1 : 0;
  return static_cast<Real>(correct) / static_cast<Real>(data.size());
}

Real class_recall(const ClassifierModel& model, const Dataset& data, ClassId id) {
  std::size_t total = 0;
  std::size_t hit = 0;
  for (const auto& s : data) {
    if (s.label != id) continue;
    ++total;
    hit += model.predict(s.x) == id ? 1 : 0;
  }
  if (total == 0) throw InputError("class_recall: no samples of the requested class");
  return static_cast<Real>(hit) / static_cast<Real>(total);
}

}  // namespace aop
