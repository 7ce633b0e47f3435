#pragma once

#include <cstdint>
#include <string>

#include "aop/learner/dataset.hpp"

namespace aop {

enum class PatternFamily { gratings, blobs, checkers };

std::string to_string(PatternFamily family);
PatternFamily parse_pattern_family(const std::string& text);

/// Parameters of a seeded class-incremental image stream. Every class is a
/// distinct member of one pattern family; samples jitter that pattern and
/// add pixel noise.
struct SyntheticSpec {
  ImageShape shape{};
  int num_tasks = 5;
  int classes_per_task = 4;
  int train_per_class = 50;
  int test_per_class = 20;
  PatternFamily family = PatternFamily::gratings;
  Real amplitude = 0.22;
  Real noise_std = 0.04;
  /// Per-sample spatial jitter, in pixels.
  Real jitter = 1.0;
  ClassId first_class_id = 0;

  void validate() const;
};

ContinualTaskStream generate_synthetic_stream(const SyntheticSpec& spec, std::uint64_t seed);

/// Pre-training source set: `classes_per_family` classes from every pattern
/// family, drawn from a seed unrelated to any task stream, labels 0..N-1.
struct SourceSpec {
  int classes_per_family = 10;
  int samples_per_class = 40;
  Real amplitude = 0.22;
  Real noise_std = 0.04;
  Real jitter = 1.0;

  void validate() const;
};

Dataset generate_source_dataset(const ImageShape& shape, const SourceSpec& spec, std::uint64_t seed);

/// All train samples of a stream flattened in task order.
Dataset flatten_train(const ContinualTaskStream& stream);

}  // namespace aop
