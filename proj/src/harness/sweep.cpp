#include "aop/harness/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "aop/harness/plot.hpp"

namespace fs = std::filesystem;

namespace aop {

namespace {

bool numeric_axis(SweepAxis axis) {
  return axis == SweepAxis::poison_rate || axis == SweepAxis::dynamic_rounds || axis == SweepAxis::target_task;
}

double parse_number(const std::string& text, const char* what) {
  double v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(std::string("sweep: '") + text + "' is not a valid " + what);
  }
  return v;
}

int parse_int(const std::string& text, const char* what) {
  int v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(std::string("sweep: '") + text + "' is not a valid " + what);
  }
  return v;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

Real summary_value(const RunManifest& m, const std::string& key) {
  auto it = m.summary.find(key);
  return it == m.summary.end() ? 0.0 : std::stod(it->second);
}

}  // namespace

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::poison_rate: return "poison_rate";
    case SweepAxis::dynamic_rounds: return "dynamic_rounds";
    case SweepAxis::target_task: return "target_task";
    case SweepAxis::surrogate_spec: return "surrogate_spec";
    case SweepAxis::loss_mode: return "loss_mode";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(const std::string& text) {
  for (auto axis : {SweepAxis::poison_rate, SweepAxis::dynamic_rounds, SweepAxis::target_task,
                    SweepAxis::surrogate_spec, SweepAxis::loss_mode}) {
    if (to_string(axis) == text) return axis;
  }
  throw ConfigError("unknown sweep axis '" + text +
                    "' (poison_rate, dynamic_rounds, target_task, surrogate_spec, loss_mode)");
}

ExperimentConfig sweep_point(const ExperimentConfig& base, SweepAxis axis, const std::string& value) {
  ExperimentConfig c = base;
  c.attack.enabled = true;
  switch (axis) {
    case SweepAxis::poison_rate:
      c.attack.aop.poison_rate = parse_number(value, "poison rate");
      c.attack.aop.poison_count.reset();
      break;
    case SweepAxis::dynamic_rounds:
      c.attack.aop.dynamic.rounds = parse_int(value, "round count");
      break;
    case SweepAxis::target_task:
      c.attack.target_task = parse_int(value, "task index");
      break;
    case SweepAxis::surrogate_spec:
      c.attack.surrogate_data.family = parse_pattern_family(value);
      // Sharing the victim family is the transferability comparison point.
      c.attack.allow_family_overlap = c.attack.surrogate_data.family == base.victim.synthetic.family;
      break;
    case SweepAxis::loss_mode: {
      const LossMode mode = parse_loss_mode(value);
      c.attack.aop.static_trigger.loss_mode = mode;
      c.attack.aop.dynamic.loss_mode = mode;
      break;
    }
  }
  c.output_dir = (fs::path(base.output_dir) / (to_string(axis) + "_" + value)).string();
  c.validate();
  return c;
}

SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                      const RunOptions& options) {
  if (values.empty()) throw InputError("sweep: no values given");
  std::vector<std::string> sorted = values;
  if (numeric_axis(axis)) {
    for (const auto& v : sorted) parse_number(v, "sweep value");
    std::stable_sort(sorted.begin(), sorted.end(), [](const std::string& a, const std::string& b) {
      return std::stod(a) < std::stod(b);
    });
  } else {
    std::sort(sorted.begin(), sorted.end());
  }
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw InputError("sweep: duplicate values");

  // Validate every point before any work starts.
  std::vector<ExperimentConfig> points;
  for (const auto& v : sorted) points.push_back(sweep_point(base, axis, v));

  const auto backbone = build_backbone(base.backbone);
  const auto stream = build_victim_stream(base);
  const CleanBaseline baseline = train_clean_baseline(base, backbone, stream);

  SweepResult result;
  result.axis = axis;
  RunOptions run_options = options;
  run_options.clean_baseline = &baseline;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto run = run_experiment(points[i], run_options);
    SweepRow row;
    row.value = sorted[i];
    row.run_dir = points[i].output_dir;
    row.final_acc = run.victim.records.back().acc_avg;
    row.final_asr = run.victim.records.back().asr_avg;
    row.clean_final_acc = run.clean.records.back().acc_avg;
    row.clean_top1_asr = summary_value(run.manifest, "clean_top1_asr");
    row.clean_top5_asr = summary_value(run.manifest, "clean_top5_asr");
    result.rows.push_back(row);
    result.manifests.push_back(run.manifest);
  }

  if (options.write_outputs) {
    const fs::path dir = base.output_dir;
    write_sweep_csv(dir / ("sweep_" + to_string(axis) + ".csv"), result);
    if (options.write_plots) {
      Series acc{"ACC", {}, {40, 90, 200}};
      Series asr{"ASR", {}, {210, 50, 40}};
      for (const auto& r : result.rows) {
        acc.values.push_back(r.final_acc);
        asr.values.push_back(r.final_asr);
      }
      plot_bars(dir / "plots" / ("sweep_" + to_string(axis) + ".png"), "SWEEP " + to_string(axis), {acc, asr});
    }
  }
  return result;
}

void write_sweep_csv(const fs::path& path, const SweepResult& result) {
  std::ostringstream s;
  s << to_string(result.axis) << ",final_acc,final_asr,clean_final_acc,clean_top1_asr,clean_top5_asr,run_dir\n";
  for (const auto& r : result.rows) {
    s << r.value << ',' << fmt6(r.final_acc) << ',' << fmt6(r.final_asr) << ',' << fmt6(r.clean_final_acc) << ','
      << fmt6(r.clean_top1_asr) << ',' << fmt6(r.clean_top5_asr) << ',' << r.run_dir << '\n';
  }
  write_text_file(path, s.str());
}

}  // namespace aop
