#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aop/harness/config.hpp"
#include "aop/metrics/metrics.hpp"

namespace aop {

std::string code_version();

/// Structured record of one run, written as a config-style text file with
/// [run], [seeds], [timings], [files] and [summary] sections.
struct RunManifest {
  std::string config_hash;
  std::string code_version;
  std::string status = "running";  // running, complete, failed
  std::string error;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, double> stage_seconds;
  std::map<std::string, std::string> files;  // role -> path relative to the run directory
  std::map<std::string, std::string> summary;

  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
};

/// Seeds handed to every randomized component of a run.
struct RunSeeds {
  std::uint64_t victim_data = 0;
  std::uint64_t surrogate_data = 0;
  std::uint64_t learner = 0;
  std::uint64_t attack = 0;
  std::uint64_t defense = 0;
};

RunSeeds derive_run_seeds(std::uint64_t seed);

/// Frozen backbone for `spec`, pre-trained on its source set when
/// `spec.pretrain.epochs > 0`. Results are cached in-process, so runs of a
/// sweep share one pre-training pass.
std::shared_ptr<const Backbone<Real>> build_backbone(const BackboneSpec& spec);

ContinualTaskStream build_victim_stream(const ExperimentConfig& config);
ContinualTaskStream build_surrogate_stream(const ExperimentConfig& config);

ClassId target_class_of(const ExperimentConfig& config, const ContinualTaskStream& stream);

/// Victim learner settings with the derived learner seed.
LearnerConfig victim_learner_config(const ExperimentConfig& config);
/// Attack settings with the derived seeds and resolved surrogate learner.
AopConfig resolved_attack_config(const ExperimentConfig& config);

/// Packs what the attacker may see: D_m and the surrogate set. Throws
/// InvariantError if the surrogate shares a class with the victim stream or
/// D_m carries any other label.
AttackInputs gather_attack_inputs(const ContinualTaskStream& victim, const ContinualTaskStream& surrogate,
                                  ClassId target, std::shared_ptr<const Backbone<Real>> backbone);

struct StreamRun {
  std::vector<Learner> checkpoints;  // learner after each task
  std::vector<TrainReport> reports;
};

/// Trains a fresh learner task by task. When `replacement` is given, the
/// training samples of `target` are swapped for it where the target arrives.
StreamRun train_on_stream(std::shared_ptr<const Backbone<Real>> backbone, const LearnerConfig& config,
                          const ContinualTaskStream& stream, ClassId target = 0,
                          const Dataset* replacement = nullptr);

/// Per-checkpoint metrics of a trained stream run; ASR is included when an
/// artifact is given.
RunMetrics evaluate_run(const StreamRun& run, const ContinualTaskStream& stream, const TriggerArtifact* artifact,
                        ClassId target);

/// The clean baseline depends on neither the attack nor the defense
/// settings, so a sweep can train it once and hand it to every run.
struct CleanBaseline {
  StreamRun run;
};

CleanBaseline train_clean_baseline(const ExperimentConfig& config, std::shared_ptr<const Backbone<Real>> backbone,
                                   const ContinualTaskStream& stream);

struct RunOptions {
  bool write_outputs = true;
  bool write_plots = true;
  /// Skip writing the (large) stream files.
  bool write_streams = true;
  const CleanBaseline* clean_baseline = nullptr;
};

struct ExperimentResult {
  RunManifest manifest;
  RunMetrics clean;
  RunMetrics victim;
  std::optional<AopResult> attack;
  std::optional<Learner> victim_model;
  std::optional<Learner> clean_model;
  ClassId target = 0;
};

/// Full run: streams, clean baseline, attack, victim training and per-task
/// evaluation. Outputs go to `config.output_dir`; on failure the partial
/// outputs stay and a FAILED marker names the error.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes `FAILED` (category and message) and marks the manifest failed.
void mark_failed(const std::filesystem::path& dir, RunManifest& manifest, const std::exception& error);

// Output helpers shared with the CLI.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_metrics_file(const std::filesystem::path& path, const RunMetrics& metrics);
void write_histograms(const std::filesystem::path& dir, const RunMetrics& metrics);
void write_run_plots(const std::filesystem::path& dir, const RunMetrics& victim, const RunMetrics* clean,
                     const AopResult* attack);
void write_poison_outputs(const std::filesystem::path& dir, const AopResult& attack,
                          const ContinualTaskStream& victim, ClassId target);

/// Defender-side evaluation of a trained victim. STRIP overlays and the
/// fine-tuning subset come from clean training data of the seen tasks;
/// probes come from the test sets.
struct DefenseOutcome {
  std::vector<DefenseReport> reports;  // strip, prompt-monitor, vanilla-ft (as selected)
};

DefenseOutcome run_defenses(const ExperimentConfig& config, const Learner& victim, const ContinualTaskStream& stream,
                            const TriggerArtifact& artifact, ClassId target,
                            const std::vector<std::string>& which = {"strip", "monitor", "finetune"});

/// defense,threshold,flagged_clean,flagged_triggered,clean_mean,clean_min,clean_max,triggered_mean,
/// acc_before,acc_after,asr_before,asr_after
void write_defense_csv(const std::filesystem::path& path, const std::vector<DefenseReport>& reports);

/// Reads metrics.csv back into (task, acc_avg, asr_avg, acc_task, asr_task) rows.
std::vector<std::array<Real, 5>> read_metrics_csv(const std::filesystem::path& path);

}  // namespace aop
