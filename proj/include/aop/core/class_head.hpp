#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "aop/core/types.hpp"

namespace aop {

/// Shared linear classifier over every class registered so far. Column j of
/// `weight` scores class `classes[j]`.
template <typename Scalar>
struct ClassHead {
  MatrixX<Scalar> weight;  // feature_dim x num_classes
  VectorX<Scalar> bias;
  std::vector<ClassId> classes;

  ClassHead() = default;
  explicit ClassHead(int feature_dim) : weight(feature_dim, 0), bias(0) {}

  int num_classes() const { return static_cast<int>(classes.size()); }
  int feature_dim() const { return static_cast<int>(weight.rows()); }
  bool empty() const { return classes.empty(); }

  bool contains(ClassId id) const {
    return std::find(classes.begin(), classes.end(), id) != classes.end();
  }

  /// Column index of `id`, or -1.
  int column_of(ClassId id) const {
    const auto it = std::find(classes.begin(), classes.end(), id);
    return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
  }

  /// Appends zero-initialized columns for ids not yet registered; existing
  /// columns are untouched. Returns the number of classes added.
  int register_classes(const std::vector<ClassId>& ids) {
    std::vector<ClassId> fresh;
    for (ClassId id : ids) {
      if (!contains(id) && std::find(fresh.begin(), fresh.end(), id) == fresh.end()) fresh.push_back(id);
    }
    if (fresh.empty()) return 0;
    const Eigen::Index old_cols = weight.cols();
    const Eigen::Index new_cols = old_cols + static_cast<Eigen::Index>(fresh.size());
    weight.conservativeResize(Eigen::NoChange, new_cols);
    weight.rightCols(new_cols - old_cols).setZero();
    bias.conservativeResize(new_cols);
    bias.tail(new_cols - old_cols).setZero();
    classes.insert(classes.end(), fresh.begin(), fresh.end());
    return static_cast<int>(fresh.size());
  }

  template <typename Derived>
  VectorX<Scalar> logits(const Eigen::MatrixBase<Derived>& feature) const {
    if (feature.size() != weight.rows()) throw InputError("class head: feature dimension mismatch");
    return weight.transpose() * feature + bias;
  }

  bool operator==(const ClassHead& o) const {
    return classes == o.classes && weight.rows() == o.weight.rows() &&
           weight.cols() == o.weight.cols() && weight == o.weight && bias == o.bias;
  }
};

}  // namespace aop
