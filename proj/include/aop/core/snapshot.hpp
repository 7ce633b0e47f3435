#pragma once

#include <filesystem>
#include <vector>

#include "aop/core/backbone.hpp"
#include "aop/core/class_head.hpp"
#include "aop/core/prompt_pool.hpp"

namespace aop {

/// On-disk model state: backbone configuration and weights, prompt pool,
/// head and registered classes. All arrays are little-endian float32; the
/// backbone fingerprint is checked on load.
struct ModelSnapshot {
  BackboneConfig backbone;
  Backbone<Real>::Parameters backbone_weights;
  std::uint64_t backbone_fingerprint = 0;
  PromptPool<Real> pool;
  ClassHead<Real> head;
  std::vector<std::int64_t> trained_tasks;
};

void save_snapshot(const std::filesystem::path& path, const ModelSnapshot& snapshot);

/// Throws ValidationError if the stored backbone does not match its
/// fingerprint.
ModelSnapshot load_snapshot(const std::filesystem::path& path);

}  // namespace aop
