#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aop/attack/pipeline.hpp"
#include "aop/defenses/defenses.hpp"
#include "aop/harness/synthetic.hpp"
#include "aop/learner/pretrain.hpp"

namespace aop {

/// Plain-text configuration tree:
///
///   # comment
///   [section]
///   key = value
///
/// Keys are unique within a section. The canonical form lists every
/// `section.key = value` line in lexicographic order and is what the
/// config hash covers.
class ConfigTree {
 public:
  static ConfigTree parse(std::istream& in, const std::string& source = "<config>");
  static ConfigTree load(const std::string& path);

  void set(const std::string& section, const std::string& key, std::string value);
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

  void write(std::ostream& out) const;
  std::string canonical() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

struct StreamSpec {
  SyntheticSpec synthetic{};
  /// Loads the stream from a manifest instead of generating it when set.
  std::string manifest;
};

struct BackboneSpec {
  BackboneConfig config{};
  /// Pre-training on a disjoint source set; zero epochs keeps random weights.
  PretrainConfig pretrain{};
  SourceSpec source{};
};

struct AttackSpec {
  bool enabled = true;
  int target_task = 0;   // 0-based task index holding c_m
  int target_index = 0;  // position of c_m within that task
  AopConfig aop{};
  SyntheticSpec surrogate_data{};
  /// Lets the surrogate share the victim's pattern family.
  bool allow_family_overlap = false;
  /// Reuses the victim's learner settings for the surrogate.
  bool surrogate_matches_victim = true;
  /// The surrogate runs on the victim's frozen backbone; otherwise on one
  /// built (and pre-trained) from `surrogate_backbone_seed`.
  bool shared_backbone = true;
  std::uint64_t surrogate_backbone_seed = 11;
};

struct DefenseSpec {
  StripOptions strip{};
  int strip_overlays = 50;
  int strip_probes = 100;
  MonitorOptions monitor{};
  int finetune_epochs = 2;
  Real finetune_fraction = 0.2;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  StreamSpec victim{};
  BackboneSpec backbone{};
  LearnerConfig learner{};
  AttackSpec attack{};
  DefenseSpec defense{};

  ExperimentConfig();

  void validate() const;
  /// The backbone takes its image shape from the victim data.
  void sync_shapes();

  ConfigTree to_tree() const;
  static ExperimentConfig from_tree(const ConfigTree& tree);

  /// FNV-1a over the canonical tree, as 16 hex digits. The output directory
  /// is excluded so relocating a run keeps its hash.
  std::string hash() const;
};

/// One addressable config value; used for the tree mapping and CLI flags.
struct ConfigField {
  std::string section;
  std::string key;
  std::string help;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;

  std::string path() const { return section + "." + key; }
};

std::vector<ConfigField> config_fields(ExperimentConfig& config);

/// Applies `section.key=value` overrides.
void apply_override(ExperimentConfig& config, const std::string& assignment);

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& config, const std::string& path);

}  // namespace aop
