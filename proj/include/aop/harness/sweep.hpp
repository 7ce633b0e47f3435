#pragma once

#include <string>
#include <vector>

#include "aop/harness/experiment.hpp"

namespace aop {

enum class SweepAxis { poison_rate, dynamic_rounds, target_task, surrogate_spec, loss_mode };

std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& text);

/// Copy of `base` with the axis set to `value`; the run directory becomes
/// `<base output>/<axis>_<value>`. Malformed values are ConfigErrors.
ExperimentConfig sweep_point(const ExperimentConfig& base, SweepAxis axis, const std::string& value);

struct SweepRow {
  std::string value;
  std::string run_dir;
  Real final_acc = 0;
  Real final_asr = 0;
  Real clean_final_acc = 0;
  Real clean_top1_asr = 0;
  Real clean_top5_asr = 0;
};

struct SweepResult {
  SweepAxis axis{};
  std::vector<SweepRow> rows;  // sorted by value (numerically where the axis is numeric)
  std::vector<RunManifest> manifests;
};

/// One run per value with the base seed. The backbone and the clean
/// baseline are shared, since no axis changes them. Writes
/// `sweep_<axis>.csv` and `plots/sweep_<axis>.png` under the base output
/// directory when outputs are enabled.
SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                      const RunOptions& options = {});

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result);

}  // namespace aop
