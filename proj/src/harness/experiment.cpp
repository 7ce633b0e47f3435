#include "aop/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include "aop/harness/plot.hpp"
#include "aop/harness/stream_io.hpp"

#ifndef AOP_VERSION
#define AOP_VERSION "dev"
#endif

namespace fs = std::filesystem;

namespace aop {

std::string code_version() { return AOP_VERSION; }

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

void RunManifest::write(const fs::path& path) const {
  ConfigTree tree;
  tree.set("run", "config_hash", config_hash);
  tree.set("run", "code_version", code_version);
  tree.set("run", "status", status);
  if (!error.empty()) tree.set("run", "error", one_line(error));
  for (const auto& [k, v] : seeds) tree.set("seeds", k, std::to_string(v));
  for (const auto& [k, v] : stage_seconds) tree.set("timings", k, fmt6(v));
  for (const auto& [k, v] : files) tree.set("files", k, v);
  for (const auto& [k, v] : summary) tree.set("summary", k, v);
  std::ostringstream text;
  text << "# run manifest\n";
  tree.write(text);
  write_text_file(path, text.str());
}

RunManifest RunManifest::read(const fs::path& path) {
  const ConfigTree tree = ConfigTree::load(path.string());
  RunManifest m;
  const auto& sections = tree.sections();
  auto section = [&](const char* name) -> const std::map<std::string, std::string>& {
    static const std::map<std::string, std::string> empty;
    auto it = sections.find(name);
    return it == sections.end() ? empty : it->second;
  };
  const auto& run = section("run");
  auto get = [&](const char* key) {
    auto it = run.find(key);
    return it == run.end() ? std::string() : it->second;
  };
  m.config_hash = get("config_hash");
  m.code_version = get("code_version");
  m.status = get("status");
  m.error = get("error");
  try {
    for (const auto& [k, v] : section("seeds")) m.seeds[k] = std::stoull(v);
    for (const auto& [k, v] : section("timings")) m.stage_seconds[k] = std::stod(v);
  } catch (const std::logic_error&) {
    throw ParseError("manifest " + path.string() + ": malformed number");
  }
  m.files = section("files");
  m.summary = section("summary");
  return m;
}

RunSeeds derive_run_seeds(std::uint64_t seed) {
  return RunSeeds{derive_seed(seed, "victim-data"), derive_seed(seed, "surrogate-data"),
                  derive_seed(seed, "victim-learner"), derive_seed(seed, "attack"), derive_seed(seed, "defense")};
}

std::shared_ptr<const Backbone<Real>> build_backbone(const BackboneSpec& spec) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const Backbone<Real>>> cache;

  ExperimentConfig probe;
  probe.backbone = spec;
  std::string key = std::to_string(spec.config.image.channels) + "x" + std::to_string(spec.config.image.height) +
                    "x" + std::to_string(spec.config.image.width);
  for (const auto& field : config_fields(probe))
    if (field.section == "backbone") key += ";" + field.key + "=" + field.get();

  std::lock_guard<std::mutex> lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  std::shared_ptr<const Backbone<Real>> backbone;
  if (spec.pretrain.epochs > 0) {
    const Dataset source = generate_source_dataset(spec.config.image, spec.source, derive_seed(spec.config.seed, "source"));
    PretrainConfig options = spec.pretrain;
    options.seed = derive_seed(spec.config.seed, "pretrain");
    backbone = std::make_shared<const Backbone<Real>>(pretrain_backbone(spec.config, source, options));
  } else {
    backbone = std::make_shared<const Backbone<Real>>(spec.config);
  }
  cache.emplace(key, backbone);
  return backbone;
}

ContinualTaskStream build_victim_stream(const ExperimentConfig& config) {
  if (!config.victim.manifest.empty()) {
    auto stream = load_stream(config.victim.manifest);
    if (stream.shape != config.victim.synthetic.shape) {
      throw ConfigError("data: manifest image shape differs from the configured shape");
    }
    return stream;
  }
  return generate_synthetic_stream(config.victim.synthetic, derive_run_seeds(config.seed).victim_data);
}

ContinualTaskStream build_surrogate_stream(const ExperimentConfig& config) {
  return generate_synthetic_stream(config.attack.surrogate_data, derive_run_seeds(config.seed).surrogate_data);
}

ClassId target_class_of(const ExperimentConfig& config, const ContinualTaskStream& stream) {
  const auto t = static_cast<std::size_t>(config.attack.target_task);
  const auto i = static_cast<std::size_t>(config.attack.target_index);
  if (t >= stream.tasks.size() || i >= stream.tasks[t].classes.size()) {
    throw ConfigError("attack: target task/index outside the stream");
  }
  return stream.tasks[t].classes[i];
}

LearnerConfig victim_learner_config(const ExperimentConfig& config) {
  LearnerConfig l = config.learner;
  l.seed = derive_run_seeds(config.seed).learner;
  return l;
}

AopConfig resolved_attack_config(const ExperimentConfig& config) {
  AopConfig a = config.attack.aop;
  a.seed = derive_run_seeds(config.seed).attack;
  if (config.attack.surrogate_matches_victim) a.surrogate = config.learner;
  return a;
}

AttackInputs gather_attack_inputs(const ContinualTaskStream& victim, const ContinualTaskStream& surrogate,
                                  ClassId target, std::shared_ptr<const Backbone<Real>> backbone) {
  for (const auto& task : surrogate.tasks)
    for (ClassId id : task.classes)
      if (victim.task_of(id) >= 0) {
        throw InvariantError("attack inputs: surrogate class " + std::to_string(id) + " belongs to the victim stream");
      }
  AttackInputs in;
  in.target_class = target;
  in.target_data = victim.train_of_class(target);
  if (in.target_data.empty()) throw InputError("attack inputs: target class has no training data");
  for (const auto& s : in.target_data)
    if (s.label != target) throw InvariantError("attack inputs: D_m holds a foreign label");
  in.surrogate_data = flatten_train(surrogate);
  in.backbone = std::move(backbone);
  return in;
}

StreamRun train_on_stream(std::shared_ptr<const Backbone<Real>> backbone, const LearnerConfig& config,
                          const ContinualTaskStream& stream, ClassId target, const Dataset* replacement) {
  if (replacement) {
    if (stream.task_of(target) < 0) throw InputError("train_on_stream: target class is not in the stream");
    for (const auto& s : *replacement)
      if (s.label != target) throw InvariantError("train_on_stream: replacement data changes a label");
  }
  StreamRun run;
  Learner learner(std::move(backbone), config);
  for (const auto& task : stream.tasks) {
    Dataset train;
    bool replaced = false;
    for (const auto& s : task.train) {
      if (replacement && s.label == target) {
        if (!replaced) train.insert(train.end(), replacement->begin(), replacement->end());
        replaced = true;
        continue;
      }
      train.push_back(s);
    }
    learner.register_classes(task.classes);
    run.reports.push_back(learner.train_task(train));
    run.checkpoints.push_back(learner);
  }
  return run;
}

RunMetrics evaluate_run(const StreamRun& run, const ContinualTaskStream& stream, const TriggerArtifact* artifact,
                        ClassId target) {
  RunMetrics m;
  for (std::size_t t = 0; t < run.checkpoints.size(); ++t) {
    m.records.push_back(evaluate_checkpoint(run.checkpoints[t], stream, static_cast<int>(t) + 1, artifact, target));
  }
  return m;
}

CleanBaseline train_clean_baseline(const ExperimentConfig& config, std::shared_ptr<const Backbone<Real>> backbone,
                                   const ContinualTaskStream& stream) {
  return CleanBaseline{train_on_stream(std::move(backbone), victim_learner_config(config), stream)};
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_metrics_file(const fs::path& path, const RunMetrics& metrics) {
  std::ostringstream s;
  write_metrics_csv(s, metrics);
  write_text_file(path, s.str());
}

void write_histograms(const fs::path& dir, const RunMetrics& metrics) {
  for (const auto& r : metrics.records) {
    const std::string t = std::to_string(r.task);
    if (r.selection_clean.empty()) continue;
    std::ostringstream sel, simc;
    write_histogram_csv(sel, r.selection_clean, r.selection_triggered);
    write_text_file(dir / ("selection_task" + t + ".csv"), sel.str());
    write_similarity_csv(simc, r.similarity_clean);
    write_text_file(dir / ("similarity_clean_task" + t + ".csv"), simc.str());
    if (!r.selection_triggered.empty()) {
      std::ostringstream simt;
      write_similarity_csv(simt, r.similarity_triggered);
      write_text_file(dir / ("similarity_triggered_task" + t + ".csv"), simt.str());
    }
  }
}

void write_run_plots(const fs::path& dir, const RunMetrics& victim, const RunMetrics* clean, const AopResult* attack) {
  const auto acc = victim.acc_history();
  const auto asr = victim.asr_history();
  std::vector<Series> series{{"VICTIM ACC", {acc.begin(), acc.end()}, {40, 90, 200}},
                             {"VICTIM ASR", {asr.begin(), asr.end()}, {210, 50, 40}}};
  if (clean) {
    const auto cacc = clean->acc_history();
    series.push_back({"CLEAN ACC", {cacc.begin(), cacc.end()}, {60, 160, 60}});
  }
  plot_lines(dir / "metrics.png", "AVERAGED ACC AND ASR PER TASK", series);

  if (!victim.records.empty() && !victim.records.back().selection_clean.empty()) {
    const auto& r = victim.records.back();
    std::vector<Series> bars;
    auto as_series = [](const std::string& name, const Histogram& h, Rgb c) {
      const auto p = normalize(h);
      return Series{name, {p.begin(), p.end()}, c};
    };
    bars.push_back(as_series("CLEAN", r.selection_clean, {40, 90, 200}));
    if (!r.selection_triggered.empty()) bars.push_back(as_series("TRIGGERED", r.selection_triggered, {210, 50, 40}));
    plot_bars(dir / "selection.png", "PROMPT SELECTION FREQUENCY", bars);
  }

  if (attack) {
    std::vector<double> loss;
    for (const auto& s : attack->log.static_steps) loss.push_back(s.loss);
    for (const auto& s : attack->log.dynamic_steps) loss.push_back(s.loss);
    if (loss.size() >= 2) {
      const auto [lo, hi] = std::minmax_element(loss.begin(), loss.end());
      const double pad = (*hi - *lo) * 0.05 + 1e-9;
      plot_lines(dir / "trigger_loss.png", "TRIGGER OBJECTIVE PER STEP", {{"LOSS", loss, {120, 60, 160}}}, *lo - pad,
                 *hi + pad);
    }
  }
}

void write_poison_outputs(const fs::path& dir, const AopResult& attack, const ContinualTaskStream& victim,
                          ClassId target) {
  const auto& plan = attack.poisoned.plan;
  ContinualTaskStream poisoned;
  poisoned.shape = victim.shape;
  TaskData task;
  task.classes = {target};
  task.train = attack.poisoned.samples;
  for (const auto& s : victim.tasks[static_cast<std::size_t>(victim.task_of(target))].test)
    if (s.label == target) task.test.push_back(s);
  poisoned.tasks.push_back(std::move(task));
  save_stream(poisoned, dir / "stream.txt");

  std::ostringstream text;
  text << "# poison plan: indices into the target-class training data carrying the trigger\n"
       << "target = " << plan.target_class << "\nrate = " << fmt6(plan.poison_rate) << "\ntotal = " << plan.total
       << "\npoisoned = " << plan.poisoned_count() << "\nselected =";
  for (auto i : plan.selected) text << ' ' << i;
  text << '\n';
  write_text_file(dir / "poison_plan.txt", text.str());
}

std::vector<std::array<Real, 5>> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "task,acc_avg,asr_avg,acc_task,asr_task") throw ParseError(path.string() + ":1: unexpected header");
  std::vector<std::array<Real, 5>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<Real, 5> row{};
    std::istringstream fields(line);
    std::string cell;
    for (auto& v : row) {
      if (!std::getline(fields, cell, ',')) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": too few fields");
      try {
        v = std::stod(cell);
      } catch (const std::logic_error&) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    rows.push_back(row);
  }
  return rows;
}

void mark_failed(const fs::path& dir, RunManifest& manifest, const std::exception& error) {
  manifest.status = "failed";
  manifest.error = error.what();
  std::string category = "internal";
  if (const auto* e = dynamic_cast<const Error*>(&error)) category = std::string(category_name(e->category()));
  try {
    write_text_file(dir / "FAILED", category + ": " + one_line(error.what()) + "\n");
    manifest.write(dir / "manifest.txt");
  } catch (const std::exception&) {
    // The original error is the one worth reporting.
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const fs::path dir = config.output_dir;
  const bool write = options.write_outputs;
  const RunSeeds seeds = derive_run_seeds(config.seed);

  ExperimentResult result;
  RunManifest& manifest = result.manifest;
  manifest.config_hash = config.hash();
  manifest.code_version = code_version();
  manifest.seeds = {{"global", config.seed},          {"victim-data", seeds.victim_data},
                    {"surrogate-data", seeds.surrogate_data}, {"victim-learner", seeds.learner},
                    {"attack", seeds.attack},          {"defense", seeds.defense},
                    {"backbone", config.backbone.config.seed}};
  if (write) {
    fs::create_directories(dir);
    fs::remove(dir / "FAILED");
    save_experiment_config(config, (dir / "config.txt").string());
    manifest.files["config"] = "config.txt";
    manifest.write(dir / "manifest.txt");
  }

  try {
    Stopwatch total;
    Stopwatch watch;
    const auto backbone = build_backbone(config.backbone);
    manifest.stage_seconds["backbone"] = watch.seconds();

    watch = Stopwatch();
    const ContinualTaskStream stream = build_victim_stream(config);
    manifest.stage_seconds["data"] = watch.seconds();
    if (write && options.write_streams) {
      save_stream(stream, dir / "data" / "stream.txt");
      manifest.files["stream"] = "data/stream.txt";
    }

    watch = Stopwatch();
    std::optional<CleanBaseline> own_baseline;
    if (!options.clean_baseline) own_baseline = train_clean_baseline(config, backbone, stream);
    const CleanBaseline& baseline = options.clean_baseline ? *options.clean_baseline : *own_baseline;
    if (baseline.run.checkpoints.size() != stream.tasks.size()) {
      throw InputError("run_experiment: clean baseline does not match the stream");
    }
    manifest.stage_seconds["clean_training"] = watch.seconds();

    result.target = target_class_of(config, stream);
    const StreamRun* victim_run = &baseline.run;
    StreamRun poisoned_run;
    const TriggerArtifact* artifact = nullptr;
    if (config.attack.enabled) {
      watch = Stopwatch();
      const ContinualTaskStream surrogate = build_surrogate_stream(config);
      auto surrogate_backbone = backbone;
      if (!config.attack.shared_backbone) {
        BackboneSpec spec = config.backbone;
        spec.config.seed = config.attack.surrogate_backbone_seed;
        surrogate_backbone = build_backbone(spec);
      }
      const AttackInputs inputs = gather_attack_inputs(stream, surrogate, result.target, surrogate_backbone);
      result.attack = run_aop(resolved_attack_config(config), inputs);
      manifest.stage_seconds["attack"] = watch.seconds();
      for (const auto& [stage, s] : result.attack->log.stage_seconds) manifest.stage_seconds["attack." + stage] = s;

      watch = Stopwatch();
      poisoned_run = train_on_stream(backbone, victim_learner_config(config), stream, result.target,
                                     &result.attack->poisoned.samples);
      victim_run = &poisoned_run;
      artifact = &result.attack->trigger;
      manifest.stage_seconds["victim_training"] = watch.seconds();
    }

    watch = Stopwatch();
    result.clean = evaluate_run(baseline.run, stream, artifact, result.target);
    result.victim = evaluate_run(*victim_run, stream, artifact, result.target);
    if (artifact) {
      Dataset all_test;
      for (const auto& task : stream.tasks) all_test.insert(all_test.end(), task.test.begin(), task.test.end());
      const Learner& clean_final = baseline.run.checkpoints.back();
      for (RunMetrics* m : {&result.clean, &result.victim}) {
        m->clean_top1_asr = clean_model_asr(clean_final, all_test, *artifact, result.target, 1);
        // Top-5 degenerates to top-(class count) on streams with fewer classes.
        const int k5 = std::min<int>(5, static_cast<int>(clean_final.class_ids().size()));
        m->clean_top5_asr = clean_model_asr(clean_final, all_test, *artifact, result.target, k5);
        m->has_clean_asr = true;
      }
    }
    result.clean.validate();
    result.victim.validate();
    manifest.stage_seconds["evaluation"] = watch.seconds();
    result.victim_model = victim_run->checkpoints.back();
    result.clean_model = baseline.run.checkpoints.back();

    auto& sum = manifest.summary;
    const auto& last = result.victim.records.back();
    const auto& clean_last = result.clean.records.back();
    sum["target_class"] = std::to_string(result.target);
    sum["final_acc"] = fmt6(last.acc_avg);
    sum["final_asr"] = fmt6(last.asr_avg);
    sum["clean_final_acc"] = fmt6(clean_last.acc_avg);
    sum["clean_final_asr"] = fmt6(clean_last.asr_avg);
    sum["acc_drop"] = fmt6(clean_last.acc_avg - last.acc_avg);
    if (artifact) {
      sum["clean_top1_asr"] = fmt6(result.victim.clean_top1_asr);
      sum["clean_top5_asr"] = fmt6(result.victim.clean_top5_asr);
      sum["trigger_linf"] = fmt6(artifact->linf_norm());
      sum["poisoned_samples"] = std::to_string(result.attack->poisoned.plan.poisoned_count());
    }

    if (write) {
      watch = Stopwatch();
      write_metrics_file(dir / "metrics.csv", result.victim);
      write_metrics_file(dir / "clean_metrics.csv", result.clean);
      manifest.files["metrics"] = "metrics.csv";
      manifest.files["clean_metrics"] = "clean_metrics.csv";
      write_histograms(dir / "histograms", result.victim);
      manifest.files["histograms"] = "histograms/";
      save_snapshot(dir / "model.bin", result.victim_model->snapshot());
      save_snapshot(dir / "clean_model.bin", result.clean_model->snapshot());
      manifest.files["model"] = "model.bin";
      manifest.files["clean_model"] = "clean_model.bin";
      if (result.attack) {
        save_trigger(dir / "trigger.bin", result.attack->trigger);
        save_trigger(dir / "static_trigger.bin", result.attack->static_trigger);
        manifest.files["trigger"] = "trigger.bin";
        manifest.files["static_trigger"] = "static_trigger.bin";
        write_poison_outputs(dir / "poisoned", *result.attack, stream, result.target);
        manifest.files["poisoned_stream"] = "poisoned/stream.txt";
        manifest.files["poison_plan"] = "poisoned/poison_plan.txt";

        std::ostringstream log;
        log << "stage,iteration,loss,linf\n";
        for (const auto& s : result.attack->log.static_steps)
          log << "static," << s.iteration << ',' << fmt6(s.loss) << ',' << fmt6(s.linf) << '\n';
        for (const auto& s : result.attack->log.dynamic_steps)
          log << "dynamic," << s.iteration << ',' << fmt6(s.loss) << ',' << fmt6(s.linf) << '\n';
        write_text_file(dir / "attack_log.csv", log.str());
        manifest.files["attack_log"] = "attack_log.csv";

        const auto& lg = result.attack->log;
        for (const auto& [stage, clean_hist] : lg.selection_clean) {
          std::ostringstream h;
          write_histogram_csv(h, clean_hist, lg.selection_triggered.at(stage));
          write_text_file(dir / "histograms" / ("surrogate_" + stage + ".csv"), h.str());
        }
      }
      if (options.write_plots) {
        write_run_plots(dir / "plots", result.victim, &result.clean, result.attack ? &*result.attack : nullptr);
        manifest.files["plots"] = "plots/";
      }
      manifest.stage_seconds["outputs"] = watch.seconds();
    }
    manifest.stage_seconds["total"] = total.seconds();
    manifest.status = "complete";
    if (write) manifest.write(dir / "manifest.txt");
  } catch (const std::exception& e) {
    if (write) mark_failed(dir, manifest, e);
    throw;
  }
  return result;
}

}  // namespace aop

namespace aop {

namespace {

Dataset seeded_subset(const Dataset& data, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  shuffle_in_place(order, rng);
  order.resize(std::min(count, order.size()));
  std::sort(order.begin(), order.end());
  Dataset out;
  for (auto i : order) out.push_back(data[i]);
  return out;
}

}  // namespace

DefenseOutcome run_defenses(const ExperimentConfig& config, const Learner& victim, const ContinualTaskStream& stream,
                            const TriggerArtifact& artifact, ClassId target, const std::vector<std::string>& which) {
  const auto& d = config.defense;
  const std::uint64_t seed = derive_run_seeds(config.seed).defense;
  Dataset train, test;
  for (const auto& task : stream.tasks) {
    train.insert(train.end(), task.train.begin(), task.train.end());
    test.insert(test.end(), task.test.begin(), task.test.end());
  }
  Dataset non_target;
  for (const auto& s : test)
    if (s.label != target) non_target.push_back(s);

  DefenseOutcome out;
  for (const auto& name : which) {
    if (name == "strip") {
      const Dataset overlays =
          canonical_overlays(seeded_subset(train, static_cast<std::size_t>(d.strip_overlays), derive_seed(seed, "overlays")));
      const Dataset probes =
          seeded_subset(non_target, static_cast<std::size_t>(d.strip_probes), derive_seed(seed, "probes"));
      StripOptions strip = d.strip;
      strip.seed = derive_seed(seed, "strip");
      out.reports.push_back(strip_screen(victim, probes, overlays, artifact, target, strip));
    } else if (name == "monitor") {
      MonitorOptions monitor = d.monitor;
      monitor.seed = derive_seed(seed, "monitor");
      out.reports.push_back(frequency_screen(victim, train, test, artifact, target, monitor));
    } else if (name == "finetune") {
      const auto count = static_cast<std::size_t>(d.finetune_fraction * static_cast<Real>(train.size()));
      const Dataset subset = seeded_subset(train, std::max<std::size_t>(count, 1), derive_seed(seed, "finetune"));
      out.reports.push_back(vanilla_finetune(victim, subset, d.finetune_epochs, test, artifact, target).report);
    } else {
      throw InputError("unknown defense '" + name + "' (strip, monitor, finetune)");
    }
    out.reports.back().validate();
  }
  return out;
}

void write_defense_csv(const fs::path& path, const std::vector<DefenseReport>& reports) {
  std::ostringstream s;
  s << "defense,threshold,flagged_clean,flagged_triggered,clean_mean,clean_min,clean_max,triggered_mean,"
       "acc_before,acc_after,asr_before,asr_after\n";
  auto mean = [](const std::vector<Real>& v) {
    Real total = 0;
    for (Real x : v) total += x;
    return v.empty() ? 0.0 : total / static_cast<Real>(v.size());
  };
  for (const auto& r : reports) {
    const Real lo = r.clean_scores.empty() ? 0.0 : *std::min_element(r.clean_scores.begin(), r.clean_scores.end());
    const Real hi = r.clean_scores.empty() ? 0.0 : *std::max_element(r.clean_scores.begin(), r.clean_scores.end());
    s << r.defense << ',' << fmt6(r.threshold) << ',' << fmt6(r.flagged_clean) << ',' << fmt6(r.flagged_triggered)
      << ',' << fmt6(mean(r.clean_scores)) << ',' << fmt6(lo) << ',' << fmt6(hi) << ','
      << fmt6(mean(r.triggered_scores)) << ',' << fmt6(r.acc_before) << ',' << fmt6(r.acc_after) << ','
      << fmt6(r.asr_before) << ',' << fmt6(r.asr_after) << '\n';
  }
  write_text_file(path, s.str());
}

}  // namespace aop
