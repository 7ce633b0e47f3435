#include "aop/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace aop {

namespace {

Image maybe_triggered(const Image& x, const TriggerArtifact* artifact) {
  return artifact ? apply_trigger_inference(x, *artifact) : x;
}

std::string fmt(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Real attack_success_rate(const ClassifierModel& model, const Dataset& test_set, const TriggerArtifact& artifact,
                         ClassId target) {
  std::size_t total = 0;
  std::size_t hit = 0;
  for (const auto& s : test_set) {
    if (s.label == target) continue;
    ++total;
    hit += model.predict(apply_trigger_inference(s.x, artifact)) == target ? 1 : 0;
  }
  if (total == 0) throw InputError("attack_success_rate: no non-target samples");
  return static_cast<Real>(hit) / static_cast<Real>(total);
}

Real averaged_history(const std::vector<Real>& values, std::size_t t) {
  if (t < 1 || t > values.size()) throw InputError("averaged_history: t out of range");
  Real sum = 0;
  for (std::size_t i = 0; i < t; ++i) sum += values[i];
  return sum / static_cast<Real>(t);
}

Real clean_model_asr(const ClassifierModel& clean_model, const Dataset& test_set, const TriggerArtifact& artifact,
                     ClassId target, int k) {
  const auto& ids = clean_model.class_ids();
  if (k < 1 || static_cast<std::size_t>(k) > ids.size()) throw InputError("clean_model_asr: k exceeds class count");
  std::size_t total = 0;
  std::size_t hit = 0;
  const bool known = std::find(ids.begin(), ids.end(), target) != ids.end();
  for (const auto& s : test_set) {
    if (s.label == target) continue;
    ++total;
    if (!known) continue;
    const auto top = clean_model.top_k(apply_trigger_inference(s.x, artifact), k);
    hit += std::find(top.begin(), top.end(), target) != top.end() ? 1 : 0;
  }
  if (total == 0) throw InputError("clean_model_asr: no non-target samples");
  return static_cast<Real>(hit) / static_cast<Real>(total);
}

Histogram selection_frequency(const ClassifierModel& model, const Dataset& data, const TriggerArtifact* artifact) {
  Histogram h(static_cast<std::size_t>(model.pool_size()), 0);
  for (const auto& s : data) {
    for (int i : model.select(maybe_triggered(s.x, artifact)).indices) ++h[static_cast<std::size_t>(i)];
  }
  return h;
}

SimilarityMap key_query_similarity_map(const ClassifierModel& model, const Dataset& data,
                                       const TriggerArtifact* artifact) {
  SimilarityMap map;
  map.classes = labels_of(data);
  const Eigen::Index rows = static_cast<Eigen::Index>(map.classes.size());
  map.mean_similarity = Matrix::Zero(rows, model.pool_size());
  std::vector<long> counts(map.classes.size(), 0);
  for (const auto& s : data) {
    const auto row = std::lower_bound(map.classes.begin(), map.classes.end(), s.label) - map.classes.begin();
    map.mean_similarity.row(row) += model.key_similarities(maybe_triggered(s.x, artifact)).transpose();
    ++counts[static_cast<std::size_t>(row)];
  }
  for (Eigen::Index r = 0; r < rows; ++r) map.mean_similarity.row(r) /= static_cast<Real>(counts[static_cast<std::size_t>(r)]);
  return map;
}

std::vector<Real> normalize(const Histogram& h) {
  long total = 0;
  for (long c : h) {
    if (c < 0) throw InputError("histogram has a negative count");
    total += c;
  }
  if (total == 0) throw InputError("histogram is empty");
  std::vector<Real> p(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) p[i] = static_cast<Real>(h[i]) / static_cast<Real>(total);
  return p;
}

Real entropy(const std::vector<Real>& p) {
  Real e = 0;
  for (Real v : p) {
    if (v > 0) e -= v * std::log(v);
  }
  return e;
}

Real entropy(const Histogram& h) { return entropy(normalize(h)); }

Real js_divergence(const Histogram& a, const Histogram& b) {
  if (a.size() != b.size()) throw InputError("js_divergence: histogram sizes differ");
  const auto p = normalize(a);
  const auto q = normalize(b);
  Real js = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Real m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::clamp(js, Real{0}, std::log(Real{2}));
}

std::vector<Real> RunMetrics::acc_history() const {
  std::vector<Real> v;
  for (const auto& r : records) v.push_back(r.acc_avg);
  return v;
}

std::vector<Real> RunMetrics::asr_history() const {
  std::vector<Real> v;
  for (const auto& r : records) v.push_back(r.asr_avg);
  return v;
}

void RunMetrics::validate() const {
  auto rate = [](Real v) { return v >= 0 && v <= 1; };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.task != static_cast<int>(i) + 1) throw InvariantError("metrics: task records out of order");
    if (r.acc_per_task.size() != i + 1) throw InvariantError("metrics: accuracy history length mismatch");
    if (!rate(r.acc_avg) || !rate(r.asr_avg)) throw InvariantError("metrics: rate outside [0, 1]");
    for (Real v : r.acc_per_task) if (!rate(v)) throw InvariantError("metrics: rate outside [0, 1]");
    for (Real v : r.asr_per_task) if (!rate(v)) throw InvariantError("metrics: rate outside [0, 1]");
  }
  if (has_clean_asr && (!rate(clean_top1_asr) || !rate(clean_top5_asr))) {
    throw InvariantError("metrics: clean-model ASR outside [0, 1]");
  }
}

TaskRecord evaluate_checkpoint(const ClassifierModel& model, const ContinualTaskStream& stream, int t,
                               const TriggerArtifact* artifact, ClassId target) {
  if (t < 1 || static_cast<std::size_t>(t) > stream.tasks.size()) throw InputError("evaluate_checkpoint: task out of range");
  TaskRecord rec;
  rec.task = t;
  Dataset seen;
  for (int i = 0; i < t; ++i) {
    const Dataset& test = stream.tasks[static_cast<std::size_t>(i)].test;
    rec.acc_per_task.push_back(evaluate_accuracy(model, test));
    if (artifact) rec.asr_per_task.push_back(attack_success_rate(model, test, *artifact, target));
    seen.insert(seen.end(), test.begin(), test.end());
  }
  rec.acc_avg = averaged_history(rec.acc_per_task, rec.acc_per_task.size());
  rec.asr_avg = artifact ? averaged_history(rec.asr_per_task, rec.asr_per_task.size()) : 0.0;
  if (model.pool_size() > 0) {
    rec.selection_clean = selection_frequency(model, seen);
    rec.similarity_clean = key_query_similarity_map(model, seen);
    if (artifact) {
      rec.selection_triggered = selection_frequency(model, seen, artifact);
      rec.similarity_triggered = key_query_similarity_map(model, seen, artifact);
    }
  }
  return rec;
}

void write_metrics_csv(std::ostream& out, const RunMetrics& metrics) {
  out << "task,acc_avg,asr_avg,acc_task,asr_task\n";
  for (const auto& r : metrics.records) {
    out << r.task << ',' << fmt(r.acc_avg) << ',' << fmt(r.asr_avg) << ',' << fmt(r.acc_per_task.back()) << ','
        << fmt(r.asr_per_task.empty() ? 0.0 : r.asr_per_task.back()) << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const Histogram& clean, const Histogram& triggered) {
  out << "prompt,clean,triggered\n";
  for (std::size_t i = 0; i < clean.size(); ++i) {
    out << i << ',' << clean[i] << ',' << (i < triggered.size() ? triggered[i] : 0) << '\n';
  }
}

void write_similarity_csv(std::ostream& out, const SimilarityMap& map) {
  out << "class";
  for (Eigen::Index j = 0; j < map.mean_similarity.cols(); ++j) out << ",prompt" << j;
  out << '\n';
  for (std::size_t r = 0; r < map.classes.size(); ++r) {
    out << map.classes[r];
    for (Eigen::Index j = 0; j < map.mean_similarity.cols(); ++j) {
      out << ',' << fmt(map.mean_similarity(static_cast<Eigen::Index>(r), j));
    }
    out << '\n';
  }
}

}  // namespace aop
