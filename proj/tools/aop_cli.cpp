// Command-line front end: one subcommand per pipeline stage plus `run` for
// the whole thing. Every config field is also a flag (`--section.key`).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aop/harness/experiment.hpp"
#include "aop/harness/plot.hpp"
#include "aop/harness/stream_io.hpp"
#include "aop/harness/sweep.hpp"

namespace fs = std::filesystem;
using namespace aop;

namespace {

constexpr int kInternalError = 1;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::map<std::string, std::string> field_values;  // flag path -> value
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides, "override, section.key=value (repeatable)");
  cmd->add_option("-o,--out", opts.output_dir, "run directory (overrides run.output_dir)");
  ExperimentConfig defaults;
  for (const auto& field : config_fields(defaults)) {
    cmd->add_option("--" + field.path(), opts.field_values[field.path()], field.help + " [" + field.get() + "]")
        ->group("Config fields");
  }
}

ExperimentConfig resolve_config(CLI::App* cmd, const CommonOptions& opts) {
  ExperimentConfig config = opts.config_path.empty() ? ExperimentConfig{} : load_experiment_config(opts.config_path);
  for (auto& field : config_fields(config)) {
    if (cmd->count("--" + field.path()) > 0) field.set(opts.field_values.at(field.path()));
  }
  config.sync_shapes();
  for (const auto& o : opts.overrides) apply_override(config, o);
  if (!opts.output_dir.empty()) config.output_dir = opts.output_dir;
  config.validate();
  return config;
}

std::string fmt6(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(6);
  s << v;
  return s.str();
}

/// Loads the run manifest if present, lets `edit` extend it and writes it back.
template <typename F>
void update_manifest(const fs::path& dir, const ExperimentConfig& config, F&& edit) {
  RunManifest m;
  if (fs::exists(dir / "manifest.txt")) m = RunManifest::read(dir / "manifest.txt");
  m.config_hash = config.hash();
  m.code_version = code_version();
  const RunSeeds seeds = derive_run_seeds(config.seed);
  m.seeds = {{"global", config.seed},          {"victim-data", seeds.victim_data},
             {"surrogate-data", seeds.surrogate_data}, {"victim-learner", seeds.learner},
             {"attack", seeds.attack},          {"defense", seeds.defense},
             {"backbone", config.backbone.config.seed}};
  edit(m);
  m.write(dir / "manifest.txt");
}

void prepare_dir(const ExperimentConfig& config) {
  fs::create_directories(config.output_dir);
  save_experiment_config(config, (fs::path(config.output_dir) / "config.txt").string());
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void print_metrics(const RunMetrics& m) {
  std::cout << "task  acc_avg   asr_avg\n";
  for (const auto& r : m.records) std::cout << r.task << "     " << fmt6(r.acc_avg) << "  " << fmt6(r.asr_avg) << '\n';
}

int cmd_generate(const ExperimentConfig& config) {
  prepare_dir(config);
  const fs::path dir = config.output_dir;
  const auto start = std::chrono::steady_clock::now();
  const auto victim = build_victim_stream(config);
  save_stream(victim, dir / "data" / "stream.txt");
  const auto surrogate = build_surrogate_stream(config);
  save_stream(surrogate, dir / "surrogate" / "stream.txt");
  update_manifest(dir, config, [&](RunManifest& m) {
    m.files["config"] = "config.txt";
    m.files["stream"] = "data/stream.txt";
    m.files["surrogate_stream"] = "surrogate/stream.txt";
    m.stage_seconds["data"] = elapsed(start);
    if (m.status.empty() || m.status == "running") m.status = "data";
  });
  std::cout << "victim stream: " << victim.tasks.size() << " tasks, " << victim.train_size() << " train samples -> "
            << (dir / "data" / "stream.txt").string() << '\n';
  std::cout << "surrogate stream: " << surrogate.train_size() << " train samples -> "
            << (dir / "surrogate" / "stream.txt").string() << '\n';
  return 0;
}

int cmd_train_clean(const ExperimentConfig& config) {
  prepare_dir(config);
  const fs::path dir = config.output_dir;
  const auto start = std::chrono::steady_clock::now();
  const auto backbone = build_backbone(config.backbone);
  const auto stream = build_victim_stream(config);
  const auto baseline = train_clean_baseline(config, backbone, stream);
  const RunMetrics metrics = evaluate_run(baseline.run, stream, nullptr, 0);
  metrics.validate();
  write_metrics_file(dir / "clean_metrics.csv", metrics);
  save_snapshot(dir / "clean_model.bin", baseline.run.checkpoints.back().snapshot());
  update_manifest(dir, config, [&](RunManifest& m) {
    m.files["config"] = "config.txt";
    m.files["clean_metrics"] = "clean_metrics.csv";
    m.files["clean_model"] = "clean_model.bin";
    m.stage_seconds["clean_training"] = elapsed(start);
    m.summary["clean_final_acc"] = fmt6(metrics.records.back().acc_avg);
  });
  print_metrics(metrics);
  return 0;
}

int cmd_attack(const ExperimentConfig& config) {
  if (!config.attack.enabled) throw ConfigError("attack.enabled is false");
  prepare_dir(config);
  const fs::path dir = config.output_dir;
  const auto start = std::chrono::steady_clock::now();
  const auto stream = build_victim_stream(config);
  const auto surrogate = build_surrogate_stream(config);
  auto backbone = build_backbone(config.backbone);
  if (!config.attack.shared_backbone) {
    BackboneSpec spec = config.backbone;
    spec.config.seed = config.attack.surrogate_backbone_seed;
    backbone = build_backbone(spec);
  }
  const ClassId target = target_class_of(config, stream);
  const auto result = run_aop(resolved_attack_config(config), gather_attack_inputs(stream, surrogate, target, backbone));
  save_trigger(dir / "trigger.bin", result.trigger);
  save_trigger(dir / "static_trigger.bin", result.static_trigger);
  write_poison_outputs(dir / "poisoned", result, stream, target);
  update_manifest(dir, config, [&](RunManifest& m) {
    m.files["config"] = "config.txt";
    m.files["trigger"] = "trigger.bin";
    m.files["static_trigger"] = "static_trigger.bin";
    m.files["poisoned_stream"] = "poisoned/stream.txt";
    m.files["poison_plan"] = "poisoned/poison_plan.txt";
    m.stage_seconds["attack"] = elapsed(start);
    for (const auto& [stage, s] : result.log.stage_seconds) m.stage_seconds["attack." + stage] = s;
    m.summary["target_class"] = std::to_string(target);
    m.summary["trigger_linf"] = fmt6(result.trigger.linf_norm());
    m.summary["poisoned_samples"] = std::to_string(result.poisoned.plan.poisoned_count());
  });
  std::cout << "target class " << target << ", ||delta||_inf = " << fmt6(result.trigger.linf_norm()) << ", "
            << result.poisoned.plan.poisoned_count() << " of " << result.poisoned.plan.total
            << " target samples poisoned\n";
  return 0;
}

fs::path default_path(const std::string& given, const ExperimentConfig& config, const char* name) {
  return given.empty() ? fs::path(config.output_dir) / name : fs::path(given);
}

int cmd_train_victim(const ExperimentConfig& config, const std::string& trigger_path, const std::string& poisoned_path) {
  prepare_dir(config);
  const fs::path dir = config.output_dir;
  const auto start = std::chrono::steady_clock::now();
  const auto trigger = load_trigger(default_path(trigger_path, config, "trigger.bin"));
  const auto poisoned = load_stream(default_path(poisoned_path, config, "poisoned/stream.txt"));
  const auto stream = build_victim_stream(config);
  const ClassId target = target_class_of(config, stream);
  if (poisoned.tasks.size() != 1 || poisoned.tasks[0].classes != std::vector<ClassId>{target}) {
    throw ValidationError("poisoned stream must hold exactly the target class " + std::to_string(target));
  }
  if (trigger.target_class != target) throw ValidationError("trigger was optimized for another target class");
  const auto backbone = build_backbone(config.backbone);
  const StreamRun run =
      train_on_stream(backbone, victim_learner_config(config), stream, target, &poisoned.tasks[0].train);
  RunMetrics metrics = evaluate_run(run, stream, &trigger, target);
  if (fs::exists(dir / "clean_model.bin")) {
    const Learner clean = Learner::restore(load_snapshot(dir / "clean_model.bin"), victim_learner_config(config));
    Dataset all_test;
    for (const auto& t : stream.tasks) all_test.insert(all_test.end(), t.test.begin(), t.test.end());
    metrics.clean_top1_asr = clean_model_asr(clean, all_test, trigger, target, 1);
    metrics.clean_top5_asr = clean_model_asr(clean, all_test, trigger, target, 5);
    metrics.has_clean_asr = true;
  }
  metrics.validate();
  write_metrics_file(dir / "metrics.csv", metrics);
  write_histograms(dir / "histograms", metrics);
  save_snapshot(dir / "model.bin", run.checkpoints.back().snapshot());
  write_run_plots(dir / "plots", metrics, nullptr, nullptr);
  update_manifest(dir, config, [&](RunManifest& m) {
    m.files["metrics"] = "metrics.csv";
    m.files["histograms"] = "histograms/";
    m.files["model"] = "model.bin";
    m.files["plots"] = "plots/";
    m.stage_seconds["victim_training"] = elapsed(start);
    m.summary["final_acc"] = fmt6(metrics.records.back().acc_avg);
    m.summary["final_asr"] = fmt6(metrics.records.back().asr_avg);
    if (metrics.has_clean_asr) {
      m.summary["clean_top1_asr"] = fmt6(metrics.clean_top1_asr);
      m.summary["clean_top5_asr"] = fmt6(metrics.clean_top5_asr);
    }
    m.status = "complete";
  });
  print_metrics(metrics);
  return 0;
}

int cmd_evaluate(const ExperimentConfig& config, const std::string& model_path, const std::string& trigger_path) {
  const fs::path dir = config.output_dir;
  const Learner model = Learner::restore(load_snapshot(default_path(model_path, config, "model.bin")),
                                         victim_learner_config(config));
  const auto stream = build_victim_stream(config);
  const ClassId target = target_class_of(config, stream);
  std::optional<TriggerArtifact> trigger;
  const fs::path tp = default_path(trigger_path, config, "trigger.bin");
  if (fs::exists(tp)) trigger = load_trigger(tp);
  const int seen = std::min<int>(model.tasks_trained(), static_cast<int>(stream.tasks.size()));
  if (seen < 1) throw StateError("model has not been trained on any task");
  const TaskRecord r = evaluate_checkpoint(model, stream, seen, trigger ? &*trigger : nullptr, target);

  std::ostringstream csv;
  csv << "task,acc,asr\n";
  for (std::size_t i = 0; i < r.acc_per_task.size(); ++i) {
    csv << i + 1 << ',' << fmt6(r.acc_per_task[i]) << ',' << fmt6(i < r.asr_per_task.size() ? r.asr_per_task[i] : 0.0)
        << '\n';
  }
  csv << "avg," << fmt6(r.acc_avg) << ',' << fmt6(r.asr_avg) << '\n';
  write_text_file(dir / "evaluation.csv", csv.str());
  std::ostringstream hist;
  write_histogram_csv(hist, r.selection_clean, r.selection_triggered);
  write_text_file(dir / "histograms" / "evaluation_selection.csv", hist.str());
  std::cout << csv.str();
  return 0;
}

int cmd_defend(const ExperimentConfig& config, const std::string& model_path, const std::string& trigger_path,
               const std::vector<std::string>& defenses) {
  const fs::path dir = config.output_dir;
  const auto start = std::chrono::steady_clock::now();
  const Learner model = Learner::restore(load_snapshot(default_path(model_path, config, "model.bin")),
                                         victim_learner_config(config));
  const auto trigger = load_trigger(default_path(trigger_path, config, "trigger.bin"));
  const auto stream = build_victim_stream(config);
  const ClassId target = target_class_of(config, stream);
  const auto outcome = run_defenses(config, model, stream, trigger, target, defenses);
  write_defense_csv(dir / "defense.csv", outcome.reports);
  update_manifest(dir, config, [&](RunManifest& m) {
    m.files["defense"] = "defense.csv";
    m.stage_seconds["defense"] = elapsed(start);
  });
  std::ifstream in(dir / "defense.csv");
  std::cout << in.rdbuf();
  return 0;
}

int cmd_sweep(const ExperimentConfig& config, const std::string& axis, const std::vector<std::string>& values) {
  const auto result = run_sweep(config, parse_sweep_axis(axis), values);
  std::ifstream in(fs::path(config.output_dir) / ("sweep_" + axis + ".csv"));
  std::cout << in.rdbuf();
  (void)result;
  return 0;
}

RunMetrics metrics_from_csv(const fs::path& path) {
  RunMetrics m;
  for (const auto& row : read_metrics_csv(path)) {
    TaskRecord r;
    r.task = static_cast<int>(row[0]);
    r.acc_avg = row[1];
    r.asr_avg = row[2];
    m.records.push_back(r);
  }
  return m;
}

Histogram column(const fs::path& csv, int index) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot read " + csv.string());
  std::string line;
  std::getline(in, line);
  Histogram h;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    for (int i = 0; i <= index; ++i) std::getline(cells, cell, ',');
    h.push_back(std::stol(cell));
  }
  return h;
}

int cmd_plot(const std::string& run_dir) {
  const fs::path dir = run_dir;
  const fs::path plots = dir / "plots";
  int written = 0;
  if (fs::exists(dir / "metrics.csv")) {
    const RunMetrics victim = metrics_from_csv(dir / "metrics.csv");
    std::optional<RunMetrics> clean;
    if (fs::exists(dir / "clean_metrics.csv")) clean = metrics_from_csv(dir / "clean_metrics.csv");
    write_run_plots(plots, victim, clean ? &*clean : nullptr, nullptr);
    ++written;
    // Selection bars for the newest checkpoint.
    const fs::path sel = dir / "histograms" / ("selection_task" + std::to_string(victim.records.size()) + ".csv");
    if (fs::exists(sel)) {
      auto series = [&](const char* name, int col, Rgb c) {
        const auto p = normalize(column(sel, col));
        return Series{name, {p.begin(), p.end()}, c};
      };
      plot_bars(plots / "selection.png", "PROMPT SELECTION FREQUENCY",
                {series("CLEAN", 1, {40, 90, 200}), series("TRIGGERED", 2, {210, 50, 40})});
    }
  } else if (fs::exists(dir / "clean_metrics.csv")) {
    write_run_plots(plots, metrics_from_csv(dir / "clean_metrics.csv"), nullptr, nullptr);
    ++written;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("sweep_", 0) != 0 || entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path());
    std::string line;
    std::getline(in, line);
    Series acc{"ACC", {}, {40, 90, 200}}, asr{"ASR", {}, {210, 50, 40}};
    while (std::getline(in, line)) {
      std::istringstream cells(line);
      std::string v, a, s;
      std::getline(cells, v, ',');
      std::getline(cells, a, ',');
      std::getline(cells, s, ',');
      acc.values.push_back(std::stod(a));
      asr.values.push_back(std::stod(s));
    }
    plot_bars(plots / (entry.path().stem().string() + ".png"), "SWEEP", {acc, asr});
    ++written;
  }
  if (written == 0) throw InputError("no metrics.csv, clean_metrics.csv or sweep_*.csv in " + dir.string());
  std::cout << "plots written to " << plots.string() << '\n';
  return 0;
}

int cmd_run(const ExperimentConfig& config) {
  const auto result = run_experiment(config);
  print_metrics(result.victim);
  for (const auto& [k, v] : result.manifest.summary) std::cout << k << " = " << v << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-selection backdoor attack on prompt-based class-incremental learners"};
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());

  CommonOptions common;
  std::string trigger_path, poisoned_path, model_path, axis, run_dir;
  std::vector<std::string> values, defenses{"strip", "monitor", "finetune"};

  auto* gen = app.add_subcommand("generate-data", "write the victim and surrogate task streams");
  auto* clean = app.add_subcommand("train-clean", "train the clean baseline learner");
  auto* attack = app.add_subcommand("attack", "optimize the trigger and poison the target-class data");
  auto* victim = app.add_subcommand("train-victim", "train the victim on the poisoned stream and evaluate it");
  auto* eval = app.add_subcommand("evaluate", "evaluate a saved model, with the trigger when present");
  auto* defend = app.add_subcommand("defend", "run STRIP, the prompt-frequency monitor and fine-tuning");
  auto* sweep = app.add_subcommand("sweep", "one full run per value of an attack parameter");
  auto* plot = app.add_subcommand("plot", "redraw plots from a run directory's CSV files");
  auto* run = app.add_subcommand("run", "full pipeline: data, clean baseline, attack, victim, metrics");

  for (auto* cmd : {gen, clean, attack, victim, eval, defend, sweep, run}) add_common(cmd, common);
  victim->add_option("--trigger", trigger_path, "trigger file [<out>/trigger.bin]");
  victim->add_option("--poisoned", poisoned_path, "poisoned stream manifest [<out>/poisoned/stream.txt]");
  for (auto* cmd : {eval, defend}) {
    cmd->add_option("--model", model_path, "model snapshot [<out>/model.bin]");
    cmd->add_option("--trigger", trigger_path, "trigger file [<out>/trigger.bin]");
  }
  defend->add_option("--defense", defenses, "defenses to run (strip, monitor, finetune)")->delimiter(',');
  sweep->add_option("--axis", axis, "poison_rate, dynamic_rounds, target_task, surrogate_spec or loss_mode")
      ->required();
  sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
  plot->add_option("run_dir", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error[" << category_name(ErrorCategory::config) << "]: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::config);
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (cmd == plot) return cmd_plot(run_dir);
    const ExperimentConfig config = resolve_config(cmd, common);
    if (cmd == gen) return cmd_generate(config);
    if (cmd == clean) return cmd_train_clean(config);
    if (cmd == attack) return cmd_attack(config);
    if (cmd == victim) return cmd_train_victim(config, trigger_path, poisoned_path);
    if (cmd == eval) return cmd_evaluate(config, model_path, trigger_path);
    if (cmd == defend) return cmd_defend(config, model_path, trigger_path, defenses);
    if (cmd == sweep) return cmd_sweep(config, axis, values);
    return cmd_run(config);
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[" << category_name(ErrorCategory::io) << "]: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::io);
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return kInternalError;
  }
}
