#pragma once

#include <vector>

#include "aop/core/types.hpp"

namespace aop {

struct Sample {
  Image x;
  ClassId label = 0;
};

using Dataset = std::vector<Sample>;

/// One class-incremental task: a disjoint set of new classes with their
/// train and test samples.
struct TaskData {
  std::vector<ClassId> classes;
  Dataset train;
  Dataset test;
};

struct ContinualTaskStream {
  ImageShape shape{};
  std::vector<TaskData> tasks;

  /// Disjoint class sets, labels drawn from each task's class list, shapes
  /// and pixel ranges valid. Throws ValidationError.
  void validate() const;

  /// Task index holding `id`, or -1.
  int task_of(ClassId id) const;

  Dataset train_of_class(ClassId id) const;
  Dataset test_up_to(int task_index) const;
  std::size_t train_size() const;
};

/// Sorted distinct labels.
std::vector<ClassId> labels_of(const Dataset& data);

Dataset concat(const Dataset& a, const Dataset& b);

bool operator==(const Sample& a, const Sample& b);
bool operator==(const TaskData& a, const TaskData& b);
bool operator==(const ContinualTaskStream& a, const ContinualTaskStream& b);

}  // namespace aop
