#pragma once

#include <memory>
#include <vector>

#include "aop/core/backbone.hpp"
#include "aop/core/class_head.hpp"
#include "aop/core/prompt_pool.hpp"

namespace aop {

template <typename Scalar>
struct PromptedOutput {
  VectorX<Scalar> logits;
  PromptSelection<Scalar> selection;
  VectorX<Scalar> query;
  VectorX<Scalar> feature;
};

/// Selects prompts with the prompt-free query, prepends them to the patch
/// tokens and classifies the prompted class-token feature.
///
/// `query` may carry a precomputed q(x); pass nullptr to compute it here.
template <typename Scalar>
PromptedOutput<Scalar> prompted_forward(const Backbone<Scalar>& backbone,
                                        const PromptPool<Scalar>& pool,
                                        const ClassHead<Scalar>& head,
                                        const VectorX<Scalar>& x,
                                        typename Backbone<Scalar>::Trace* trace = nullptr,
                                        const VectorX<Scalar>* query = nullptr) {
  if (head.empty()) throw StateError("prompted_forward: class head has no registered classes");
  PromptedOutput<Scalar> out;
  out.query = query ? *query : backbone.query(x);
  out.selection = select_prompts(pool, out.query);
  out.feature = backbone.forward(x, pool.gather(out.selection.indices), trace);
  out.logits = head.logits(out.feature);
  return out;
}

/// Read-only view every metric and defense works against. Stub models in
/// tests implement it directly; trained learners implement it through the
/// prompted forward pass.
class ClassifierModel {
 public:
  virtual ~ClassifierModel() = default;

  virtual Vector logits(const Image& x) const = 0;
  virtual const std::vector<ClassId>& class_ids() const = 0;

  /// Prompt-pool size; zero for models without a pool.
  virtual int pool_size() const { return 0; }
  virtual PromptSelection<Real> select(const Image&) const {
    throw StateError("model has no prompt pool");
  }
  virtual Vector key_similarities(const Image&) const {
    throw StateError("model has no prompt pool");
  }

  /// Argmax over all registered classes; lowest column wins ties.
  ClassId predict(const Image& x) const {
    const auto& ids = class_ids();
    if (ids.empty()) throw StateError("predict: no registered classes");
    const Vector s = logits(x);
    Eigen::Index best = 0;
    s.maxCoeff(&best);
    return ids[static_cast<std::size_t>(best)];
  }

  /// Class ids of the k largest logits, best first.
  std::vector<ClassId> top_k(const Image& x, int k) const;
};

inline std::vector<ClassId> ClassifierModel::top_k(const Image& x, int k) const {
  const auto& ids = class_ids();
  if (k < 1 || k > static_cast<int>(ids.size())) {
    throw InputError("top_k: k must lie in [1, class count]");
  }
  const Vector s = logits(x);
  std::vector<int> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&s](int a, int b) {
    if (s(a) != s(b)) return s(a) > s(b);
    return a < b;
  });
  std::vector<ClassId> out;
  for (int i = 0; i < k; ++i) out.push_back(ids[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  return out;
}

}  // namespace aop
