#include "aop/harness/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace aop {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_real(Real v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Real parse_real(const std::string& field, const std::string& text) {
  Real v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError(field + ": expected a number, got '" + text + "'");
  }
  return v;
}

long long parse_int(const std::string& field, const std::string& text) {
  long long v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError(field + ": expected an integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& field, const std::string& text) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError(field + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& field, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(field + ": expected true or false, got '" + text + "'");
}

class FieldList {
 public:
  explicit FieldList(std::string section) : section_(std::move(section)) {}
  void section(std::string name) { section_ = std::move(name); }

  void real(const std::string& key, Real& v, std::string help) {
    const std::string path = section_ + "." + key;
    add(key, std::move(help), [&v] { return format_real(v); },
        [&v, path](const std::string& s) { v = parse_real(path, s); });
  }
  void integer(const std::string& key, int& v, std::string help) {
    const std::string path = section_ + "." + key;
    add(key, std::move(help), [&v] { return std::to_string(v); },
        [&v, path](const std::string& s) { v = static_cast<int>(parse_int(path, s)); });
  }
  void u64(const std::string& key, std::uint64_t& v, std::string help) {
    const std::string path = section_ + "." + key;
    add(key, std::move(help), [&v] { return std::to_string(v); },
        [&v, path](const std::string& s) { v = parse_u64(path, s); });
  }
  void id(const std::string& key, ClassId& v, std::string help) {
    const std::string path = section_ + "." + key;
    add(key, std::move(help), [&v] { return std::to_string(v); },
        [&v, path](const std::string& s) { v = parse_int(path, s); });
  }
  void boolean(const std::string& key, bool& v, std::string help) {
    const std::string path = section_ + "." + key;
    add(key, std::move(help), [&v] { return std::string(v ? "true" : "false"); },
        [&v, path](const std::string& s) { v = parse_bool(path, s); });
  }
  void text(const std::string& key, std::string& v, std::string help) {
    add(key, std::move(help), [&v] { return v; }, [&v](const std::string& s) { v = s; });
  }
  void family(const std::string& key, PatternFamily& v, std::string help) {
    add(key, std::move(help), [&v] { return to_string(v); },
        [&v](const std::string& s) { v = parse_pattern_family(s); });
  }
  void loss(const std::string& key, LossMode& v, std::string help) {
    add(key, std::move(help), [&v] { return to_string(v); }, [&v](const std::string& s) { v = parse_loss_mode(s); });
  }
  void count(const std::string& key, std::optional<std::size_t>& v, std::string help) {
    const std::string path = section_ + "." + key;
    add(key, std::move(help), [&v] { return v ? std::to_string(*v) : std::string("none"); },
        [&v, path](const std::string& s) {
          if (s == "none") {
            v.reset();
          } else {
            v = static_cast<std::size_t>(parse_u64(path, s));
          }
        });
  }
  void synthetic(SyntheticSpec& s) {
    family("family", s.family, "pattern family (gratings, blobs, checkers)");
    integer("tasks", s.num_tasks, "number of tasks");
    integer("classes_per_task", s.classes_per_task, "classes per task");
    integer("train_per_class", s.train_per_class, "training samples per class");
    integer("test_per_class", s.test_per_class, "test samples per class");
    real("amplitude", s.amplitude, "pattern amplitude");
    real("noise_std", s.noise_std, "pixel noise standard deviation");
    real("jitter", s.jitter, "spatial jitter in pixels");
    id("first_class_id", s.first_class_id, "id of the first class");
    const std::string path = section_ + ".image_size";
    add("image_size", "image height and width", [&s] { return std::to_string(s.shape.height); },
        [&s, path](const std::string& v) { s.shape.height = s.shape.width = static_cast<int>(parse_int(path, v)); });
    integer("channels", s.shape.channels, "image channels");
  }

  std::vector<ConfigField> take() { return std::move(fields_); }

 private:
  void add(const std::string& key, std::string help, std::function<std::string()> get,
           std::function<void(const std::string&)> set) {
    fields_.push_back({section_, key, std::move(help), std::move(get), std::move(set)});
  }

  std::string section_;
  std::vector<ConfigField> fields_;
};

void learner_fields(FieldList& f, LearnerConfig& l) {
  f.integer("pool_size", l.pool_size, "prompt pool size");
  f.integer("prompt_length", l.prompt_length, "tokens per prompt");
  f.integer("top_k", l.top_k, "prompts selected per input");
  f.real("lambda", l.lambda, "key-query pull weight");
  f.real("learning_rate", l.learning_rate, "optimizer learning rate");
  f.integer("epochs", l.epochs, "epochs per task");
  f.integer("batch_size", l.batch_size, "mini-batch size");
  f.loss("loss", l.loss_mode, "classification loss (ce, bce)");
}

}  // namespace

ConfigTree ConfigTree::parse(std::istream& in, const std::string& source) {
  ConfigTree tree;
  std::string line;
  std::string section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto where = source + ":" + std::to_string(number) + ": ";
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) throw ParseError(where + "malformed section header '" + body + "'");
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected 'key = value', got '" + body + "'");
    if (section.empty()) throw ParseError(where + "key outside of any section");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ParseError(where + "empty key");
    if (tree.get(section, key)) throw ParseError(where + "duplicate key '" + section + "." + key + "'");
    tree.set(section, key, value);
  }
  return tree;
}

ConfigTree ConfigTree::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse(in, path);
}

void ConfigTree::set(const std::string& section, const std::string& key, std::string value) {
  sections_[section][key] = std::move(value);
}

std::optional<std::string> ConfigTree::get(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void ConfigTree::write(std::ostream& out) const {
  bool first = true;
  for (const auto& [section, keys] : sections_) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const auto& [key, value] : keys) out << key << " = " << value << '\n';
  }
}

std::string ConfigTree::canonical() const {
  std::string out;
  for (const auto& [section, keys] : sections_) {
    for (const auto& [key, value] : keys) out += section + "." + key + " = " + value + "\n";
  }
  return out;
}

ExperimentConfig::ExperimentConfig() {
  backbone.config.seed = 7;
  backbone.pretrain.epochs = 5;
  attack.surrogate_data.family = PatternFamily::blobs;
  attack.surrogate_data.num_tasks = 2;
  attack.surrogate_data.first_class_id = 1000;
  attack.surrogate_data.test_per_class = 0;
}

std::vector<ConfigField> config_fields(ExperimentConfig& c) {
  FieldList f("run");
  f.u64("seed", c.seed, "global seed");
  f.text("output_dir", c.output_dir, "run directory");

  f.section("data");
  f.synthetic(c.victim.synthetic);
  f.text("manifest", c.victim.manifest, "task-stream manifest to load instead of generating");

  f.section("backbone");
  auto& b = c.backbone;
  f.u64("seed", b.config.seed, "weight seed");
  f.integer("patch_size", b.config.patch_size, "patch side length");
  f.integer("feature_dim", b.config.feature_dim, "token width");
  f.integer("layers", b.config.num_layers, "encoder layers");
  f.integer("heads", b.config.num_heads, "attention heads");
  f.integer("mlp_dim", b.config.mlp_dim, "hidden width of the MLP blocks");
  f.real("token_init_std", b.config.token_init_std, "class/position token init scale");
  f.integer("pretrain_epochs", b.pretrain.epochs, "source pre-training epochs (0 = random weights)");
  f.real("pretrain_lr", b.pretrain.learning_rate, "source pre-training learning rate");
  f.integer("pretrain_batch", b.pretrain.batch_size, "source pre-training batch size");
  f.integer("source_classes_per_family", b.source.classes_per_family, "source classes per pattern family");
  f.integer("source_samples_per_class", b.source.samples_per_class, "source samples per class");

  f.section("learner");
  learner_fields(f, c.learner);

  f.section("attack");
  auto& a = c.attack;
  f.boolean("enabled", a.enabled, "run the attack");
  f.integer("target_task", a.target_task, "task holding the target class (0-based)");
  f.integer("target_index", a.target_index, "target class position within its task");
  f.real("epsilon", a.aop.epsilon, "l-infinity bound on the trigger");
  f.real("amplification", a.aop.amplification, "inference-time trigger scale");
  f.real("poison_rate", a.aop.poison_rate, "fraction of target-class data poisoned");
  f.count("poison_count", a.aop.poison_count, "absolute poison count (overrides the rate)");
  f.real("split_fraction", a.aop.split_fraction, "share of surrogate data in the static split");
  f.integer("static_epochs", a.aop.static_epochs, "surrogate epochs in the static stage");
  f.integer("static_iterations", a.aop.static_trigger.iterations, "trigger iterations in the static pass");
  f.loss("static_loss", a.aop.static_trigger.loss_mode, "static trigger loss (ce, bce)");
  f.real("trigger_lr", a.aop.static_trigger.learning_rate, "trigger learning rate");
  f.integer("transition_epochs", a.aop.transition_epochs, "surrogate epochs in the transition stage");
  f.integer("rounds", a.aop.dynamic.rounds, "dynamic rounds");
  f.integer("round_iterations", a.aop.dynamic.trigger_iterations_per_round, "trigger iterations per round");
  f.integer("round_prompt_epochs", a.aop.dynamic.prompt_epochs_per_round, "prompt epochs per round");
  f.loss("dynamic_loss", a.aop.dynamic.loss_mode, "dynamic trigger loss (ce, bce)");
  f.boolean("skip_dynamic", a.aop.skip_dynamic, "static-only ablation");
  f.boolean("allow_family_overlap", a.allow_family_overlap, "allow the surrogate to share the victim family");
  f.boolean("surrogate_matches_victim", a.surrogate_matches_victim, "surrogate uses the victim learner settings");
  f.boolean("shared_backbone", a.shared_backbone, "surrogate shares the victim's frozen backbone");
  f.u64("surrogate_backbone_seed", a.surrogate_backbone_seed, "backbone seed when not shared");

  f.section("surrogate_data");
  f.synthetic(a.surrogate_data);

  f.section("surrogate_learner");
  learner_fields(f, a.aop.surrogate);

  f.section("defense");
  auto& d = c.defense;
  f.integer("strip_perturb", d.strip.n_perturb, "STRIP overlays per input");
  f.integer("strip_overlays", d.strip_overlays, "size of the STRIP overlay set");
  f.integer("strip_probes", d.strip_probes, "STRIP probe inputs");
  f.integer("monitor_batch", d.monitor.batch_size, "prompt-frequency monitor batch size");
  f.integer("monitor_batches", d.monitor.batches, "monitor batches per condition");
  f.real("monitor_quantile", d.monitor.clean_quantile, "clean-score quantile used as threshold");
  f.integer("finetune_epochs", d.finetune_epochs, "vanilla fine-tuning epochs");
  f.real("finetune_fraction", d.finetune_fraction, "share of seen training data used for fine-tuning");
  return f.take();
}

void ExperimentConfig::sync_shapes() { backbone.config.image = victim.synthetic.shape; }

void ExperimentConfig::validate() const {
  const auto& s = victim.synthetic;
  s.validate();
  if (s.shape.width != s.shape.height) throw ConfigError("data: only square images are supported");
  if (!victim.manifest.empty() && !std::filesystem::exists(victim.manifest)) {
    throw ConfigError("data: manifest '" + victim.manifest + "' does not exist");
  }
  backbone.config.validate();
  if (backbone.config.image != s.shape) throw ConfigError("backbone: image shape differs from the data");
  if (backbone.pretrain.epochs < 0) throw ConfigError("backbone: pretrain_epochs must be non-negative");
  if (backbone.pretrain.epochs > 0) {
    backbone.pretrain.validate();
    backbone.source.validate();
  }
  learner.validate();
  if (attack.enabled) {
    if (attack.target_task < 0 || attack.target_task >= s.num_tasks) throw ConfigError("attack: target_task out of range");
    if (attack.target_index < 0 || attack.target_index >= s.classes_per_task) {
      throw ConfigError("attack: target_index out of range");
    }
    attack.aop.validate();
    attack.surrogate_data.validate();
    if (attack.surrogate_data.shape != s.shape) throw ConfigError("surrogate_data: image shape differs from the data");
    if (!attack.allow_family_overlap && attack.surrogate_data.family == s.family && victim.manifest.empty()) {
      throw ConfigError("surrogate_data: family overlaps the victim family; set attack.allow_family_overlap");
    }
    const ClassId lo = attack.surrogate_data.first_class_id;
    const ClassId hi = lo + attack.surrogate_data.num_tasks * attack.surrogate_data.classes_per_task;
    const ClassId vlo = s.first_class_id;
    const ClassId vhi = vlo + s.num_tasks * s.classes_per_task;
    if (lo < vhi && vlo < hi) throw ConfigError("surrogate_data: class ids overlap the victim's");
  }
  const auto& d = defense;
  if (d.strip.n_perturb < 1 || d.strip_overlays < 1 || d.strip_probes < 1) throw ConfigError("defense: STRIP counts must be positive");
  if (d.monitor.batch_size < 1 || d.monitor.batches < 1) throw ConfigError("defense: monitor counts must be positive");
  if (!(d.monitor.clean_quantile >= 0 && d.monitor.clean_quantile <= 1)) throw ConfigError("defense: quantile must lie in [0, 1]");
  if (d.finetune_epochs < 1) throw ConfigError("defense: finetune_epochs must be positive");
  if (!(d.finetune_fraction > 0 && d.finetune_fraction <= 1)) throw ConfigError("defense: finetune_fraction must lie in (0, 1]");
}

ConfigTree ExperimentConfig::to_tree() const {
  ExperimentConfig copy = *this;
  ConfigTree tree;
  for (const auto& field : config_fields(copy)) tree.set(field.section, field.key, field.get());
  return tree;
}

ExperimentConfig ExperimentConfig::from_tree(const ConfigTree& tree) {
  ExperimentConfig c;
  auto fields = config_fields(c);
  std::map<std::string, ConfigField*> index;
  for (auto& f : fields) index[f.path()] = &f;
  for (const auto& [section, keys] : tree.sections()) {
    for (const auto& [key, value] : keys) {
      const auto it = index.find(section + "." + key);
      if (it == index.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
      it->second->set(value);
    }
  }
  c.sync_shapes();
  return c;
}

std::string ExperimentConfig::hash() const {
  ConfigTree tree = to_tree();
  tree.set("run", "output_dir", "");
  const std::uint64_t h = fnv1a(tree.canonical());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  const std::string path = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  for (auto& f : config_fields(config)) {
    if (f.path() == path) {
      f.set(value);
      config.sync_shapes();
      return;
    }
  }
  throw ConfigError("unknown config key '" + path + "'");
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return ExperimentConfig::from_tree(ConfigTree::load(path));
}

void save_experiment_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file " + path);
  config.to_tree().write(out);
  if (!out) throw IoError("failed writing config file " + path);
}

}  // namespace aop
