#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "aop/core/random.hpp"
#include "aop/core/types.hpp"

namespace aop {

/// Cosine similarity a.b / (|a||b|). Throws on a zero-norm argument.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw InputError("cosine_similarity: size mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(0)) || !(nb > Scalar(0))) {
    throw DegenerateInputError("cosine_similarity: zero-norm vector");
  }
  const Scalar c = a.dot(b) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

/// d cos(q, k) / d k.
template <typename DerivedQ, typename DerivedK>
VectorX<typename DerivedQ::Scalar> cosine_similarity_grad_wrt_second(
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& k) {
  using Scalar = typename DerivedQ::Scalar;
  const Scalar nq = q.norm();
  const Scalar nk = k.norm();
  if (!(nq > Scalar(0)) || !(nk > Scalar(0))) {
    throw DegenerateInputError("cosine_similarity: zero-norm vector");
  }
  const Scalar c = q.dot(k) / (nq * nk);
  return q / (nq * nk) - c * k / (nk * nk);
}

template <typename Scalar>
struct PromptSelection {
  std::vector<int> indices;
  std::vector<Scalar> similarities;
};

/// Learnable (key, prompt) pairs with top-k key routing.
template <typename Scalar>
struct PromptPool {
  MatrixX<Scalar> keys;                  // pool_size x feature_dim
  std::vector<MatrixX<Scalar>> prompts;  // pool_size entries, each prompt_length x feature_dim
  int top_k = 1;

  PromptPool() = default;

  /// Keys and prompts drawn uniformly from [-1, 1].
  PromptPool(int pool_size, int prompt_length, int feature_dim, int top_k_, std::uint64_t seed)
      : top_k(top_k_) {
    if (pool_size <= 0 || prompt_length <= 0 || feature_dim <= 0) {
      throw ConfigError("prompt pool dimensions must be positive");
    }
    Rng rng(derive_seed(seed, "prompt-pool"));
    auto uniform = [&rng](Eigen::Index r, Eigen::Index c) {
      MatrixX<Scalar> m(r, c);
      for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = Scalar(2.0 * uniform01(rng) - 1.0);
      return m;
    };
    keys = uniform(pool_size, feature_dim);
    prompts.reserve(static_cast<std::size_t>(pool_size));
    for (int i = 0; i < pool_size; ++i) prompts.push_back(uniform(prompt_length, feature_dim));
    validate();
  }

  int size() const { return static_cast<int>(keys.rows()); }
  int feature_dim() const { return static_cast<int>(keys.cols()); }
  int prompt_length() const { return prompts.empty() ? 0 : static_cast<int>(prompts.front().rows()); }

  void validate() const {
    if (static_cast<std::size_t>(keys.rows()) != prompts.size()) {
      throw ValidationError("prompt pool: key and prompt counts differ");
    }
    if (top_k < 1 || top_k > size()) throw ValidationError("prompt pool: top_k must be in [1, pool size]");
    if (!keys.allFinite()) throw ValidationError("prompt pool: non-finite key");
    for (const auto& p : prompts) {
      if (p.cols() != keys.cols() || p.rows() != prompts.front().rows()) {
        throw ValidationError("prompt pool: ragged prompt shapes");
      }
      if (!p.allFinite()) throw ValidationError("prompt pool: non-finite prompt");
    }
  }

  /// Selected prompts stacked in selection order.
  MatrixX<Scalar> gather(const std::vector<int>& indices) const {
    const Eigen::Index len = prompt_length();
    MatrixX<Scalar> tokens(len * static_cast<Eigen::Index>(indices.size()), feature_dim());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      tokens.middleRows(static_cast<Eigen::Index>(i) * len, len) =
          prompts[static_cast<std::size_t>(indices[i])];
    }
    return tokens;
  }

  bool operator==(const PromptPool& other) const {
    if (top_k != other.top_k || keys.rows() != other.keys.rows() ||
        keys.cols() != other.keys.cols() || keys != other.keys ||
        prompts.size() != other.prompts.size()) {
      return false;
    }
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (prompts[i].rows() != other.prompts[i].rows() || prompts[i] != other.prompts[i]) return false;
    }
    return true;
  }
};

/// Similarity of `query` to every key.
template <typename Scalar, typename Derived>
VectorX<Scalar> key_similarities(const PromptPool<Scalar>& pool,
                                 const Eigen::MatrixBase<Derived>& query) {
  VectorX<Scalar> sims(pool.size());
  for (int i = 0; i < pool.size(); ++i) sims(i) = cosine_similarity(query, pool.keys.row(i).transpose());
  return sims;
}

/// Top-k keys by descending cosine similarity; ties go to the lower index.
template <typename Scalar, typename Derived>
PromptSelection<Scalar> select_prompts(const PromptPool<Scalar>& pool,
                                       const Eigen::MatrixBase<Derived>& query) {
  if (!query.allFinite()) throw InputError("select_prompts: non-finite query");
  if (query.size() != pool.feature_dim()) throw InputError("select_prompts: query dimension mismatch");
  const VectorX<Scalar> sims = key_similarities(pool, query);
  std::vector<int> order(static_cast<std::size_t>(pool.size()));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + pool.top_k, order.end(), [&sims](int a, int b) {
    if (sims(a) != sims(b)) return sims(a) > sims(b);
    return a < b;
  });
  PromptSelection<Scalar> out;
  out.indices.assign(order.begin(), order.begin() + pool.top_k);
  for (int i : out.indices) out.similarities.push_back(sims(i));
  return out;
}

}  // namespace aop
