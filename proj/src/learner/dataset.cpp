#include "aop/learner/dataset.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace aop {

void ContinualTaskStream::validate() const {
  std::set<ClassId> seen;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    if (task.classes.empty()) throw ValidationError("task " + std::to_string(t) + " has no classes");
    for (ClassId c : task.classes) {
      if (!seen.insert(c).second) {
        throw ValidationError("class " + std::to_string(c) + " appears in more than one task");
      }
    }
    auto check = [&](const Dataset& data, const char* split) {
      for (const auto& s : data) {
        if (std::find(task.classes.begin(), task.classes.end(), s.label) == task.classes.end()) {
          throw ValidationError("task " + std::to_string(t) + " " + split + " sample has label " +
                                std::to_string(s.label) + " outside the task's classes");
        }
        if (s.x.size() != shape.size()) throw ValidationError("sample shape does not match stream shape");
        if (!s.x.allFinite() || s.x.minCoeff() < 0.0 || s.x.maxCoeff() > 1.0) {
          throw ValidationError("sample pixels must lie in [0, 1]");
        }
      }
    };
    check(task.train, "train");
    check(task.test, "test");
  }
}

int ContinualTaskStream::task_of(ClassId id) const {
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& cls = tasks[t].classes;
    if (std::find(cls.begin(), cls.end(), id) != cls.end()) return static_cast<int>(t);
  }
  return -1;
}

Dataset ContinualTaskStream::train_of_class(ClassId id) const {
  Dataset out;
  for (const auto& task : tasks)
    for (const auto& s : task.train)
      if (s.label == id) out.push_back(s);
  return out;
}

Dataset ContinualTaskStream::test_up_to(int task_index) const {
  Dataset out;
  for (int t = 0; t <= task_index && t < static_cast<int>(tasks.size()); ++t) {
    const auto& test = tasks[static_cast<std::size_t>(t)].test;
    out.insert(out.end(), test.begin(), test.end());
  }
  return out;
}

std::size_t ContinualTaskStream::train_size() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.train.size();
  return n;
}

std::vector<ClassId> labels_of(const Dataset& data) {
  std::vector<ClassId> out;
  for (const auto& s : data) out.push_back(s.label);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

bool operator==(const Sample& a, const Sample& b) {
  return a.label == b.label && a.x.size() == b.x.size() && a.x == b.x;
}

bool operator==(const TaskData& a, const TaskData& b) {
  return a.classes == b.classes && a.train == b.train && a.test == b.test;
}

bool operator==(const ContinualTaskStream& a, const ContinualTaskStream& b) {
  return a.shape == b.shape && a.tasks == b.tasks;
}

}  // namespace aop
