#include <doctest.h>

#include <numeric>
#include <sstream>

#include "aop/metrics/metrics.hpp"
#include "helpers.hpp"

using namespace aop;
using namespace aop::testing;

namespace {

// Predicts class 0 (the target) when pixel 2 is set, else the class coded in pixel 0.
StubModel hit_model() {
  return StubModel({0, 1, 2, 3}, [](const Image& x) {
    Vector s = Vector::Zero(4);
    if (x(2) > 0.5) s(0) = 1;
    else s(std::clamp<Eigen::Index>(std::lround(x(0) * 10), 0, 3)) = 1;
    return s;
  });
}

Sample coded(int label, bool hit) {
  Image x = Image::Zero(4);
  x(0) = label / 10.0;
  x(2) = hit ? 1.0 : 0.0;
  return {x, label};
}

}  // namespace

TEST_CASE("attack success rate") {
  const auto zero = TriggerArtifact::zeros({1, 2, 2}, 0);
  Dataset test;
  for (int i = 0; i < 10; ++i) test.push_back(coded(1 + i % 3, i < 7));
  test.push_back(coded(0, false));  // target-class samples are excluded
  CHECK(attack_success_rate(hit_model(), test, zero, 0) == doctest::Approx(0.7));

  StubModel always({0, 1}, [](const Image&) { return Vector(Vector::Unit(2, 0)); });
  StubModel never({0, 1}, [](const Image&) { return Vector(Vector::Unit(2, 1)); });
  CHECK(attack_success_rate(always, test, zero, 0) == 1.0);
  CHECK(attack_success_rate(never, test, zero, 0) == 0.0);
  CHECK_THROWS_AS(attack_success_rate(always, Dataset{coded(0, false)}, zero, 0), InputError);
}

TEST_CASE("ASR with zero amplification is the clean base rate") {
  auto art = TriggerArtifact::zeros({1, 2, 2}, 0);
  art.delta.setConstant(art.epsilon);
  art.amplification = 0;
  Dataset test;
  for (int i = 0; i < 20; ++i) test.push_back(coded(1 + i % 3, i % 4 == 0));
  long base = 0;
  for (const auto& s : test) base += hit_model().predict(s.x) == 0 ? 1 : 0;
  CHECK(attack_success_rate(hit_model(), test, art, 0) == static_cast<Real>(base) / 20.0);
}

TEST_CASE("averaged history") {
  CHECK(averaged_history({1.0, 0.5}, 2) == 0.75);
  CHECK(averaged_history({0.3, 0.9, 0.1}, 1) == 0.3);
  CHECK(averaged_history({0, 0, 1}, 3) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(averaged_history({1.0}, 0), InputError);
  CHECK_THROWS_AS(averaged_history({1.0}, 2), InputError);

  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Real> v(1 + rng() % 12);
    for (auto& x : v) x = uniform01(rng);
    for (std::size_t t = 1; t <= v.size(); ++t) {
      Real sum = 0;
      for (std::size_t i = 0; i < t; ++i) sum += v[i];
      CHECK(averaged_history(v, t) == sum / static_cast<Real>(t));
    }
  }
}

TEST_CASE("clean-model ASR") {
  const auto zero = TriggerArtifact::zeros({1, 2, 2}, 0);
  Dataset test;
  for (int i = 0; i < 12; ++i) test.push_back(coded(1 + i % 3, i % 3 == 0));
  const auto m = hit_model();
  CHECK(clean_model_asr(m, test, zero, 0, 4) >= clean_model_asr(m, test, zero, 0, 1));
  CHECK(clean_model_asr(m, test, zero, 0, 1) == doctest::Approx(4.0 / 12.0));
  CHECK(clean_model_asr(m, test, zero, 9, 1) == 0.0);
  CHECK_THROWS_AS(clean_model_asr(m, test, zero, 0, 5), InputError);
}

TEST_CASE("selection frequency and similarity maps") {
  PixelCodedModel m(3, 5);
  Dataset data;
  for (int i = 0; i < 9; ++i) data.push_back({coded_image(i % 3, i % 5), i % 3});
  const auto h = selection_frequency(m, data);
  CHECK(std::accumulate(h.begin(), h.end(), 0L) == 9);
  const auto one = selection_frequency(m, Dataset{data[3]});
  CHECK(std::count_if(one.begin(), one.end(), [](long c) { return c != 0; }) == 1);

  const auto a = key_query_similarity_map(m, data);
  const auto b = key_query_similarity_map(m, data);
  CHECK(a.mean_similarity == b.mean_similarity);
  CHECK(a.classes == std::vector<ClassId>{0, 1, 2});
  const auto single = key_query_similarity_map(m, Dataset{data[4]});
  CHECK(Vector(single.mean_similarity.row(0).transpose()) == m.key_similarities(data[4].x));
}

TEST_CASE("entropy and Jensen-Shannon divergence") {
  CHECK(entropy(Histogram{5, 5}) == doctest::Approx(std::log(2.0)));
  CHECK(entropy(Histogram{0, 7, 0}) == 0.0);
  CHECK_THROWS_AS(normalize(Histogram{0, 0}), InputError);

  const Histogram a{4, 0, 2, 2}, b{1, 3, 0, 4};
  CHECK(js_divergence(a, a) == 0.0);
  CHECK(js_divergence(a, Histogram{8, 0, 4, 4}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(js_divergence(a, b) == doctest::Approx(js_divergence(b, a)));
  CHECK(js_divergence(a, b) > 0);
  CHECK(js_divergence(Histogram{1, 0}, Histogram{0, 1}) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(js_divergence(a, Histogram{1, 1}), InputError);
}

TEST_CASE("checkpoint evaluation and CSV") {
  PixelCodedModel m(4, 3);
  ContinualTaskStream stream;
  stream.shape = {1, 2, 2};
  for (int t = 0; t < 2; ++t) {
    TaskData task;
    task.classes = {2 * t, 2 * t + 1};
    for (ClassId c : task.classes)
      for (int i = 0; i < 3; ++i) {
        task.train.push_back({coded_image(static_cast<int>(c), i), c});
        task.test.push_back({coded_image(static_cast<int>(c), i), c});
      }
    stream.tasks.push_back(task);
  }
  auto art = TriggerArtifact::zeros({1, 2, 2}, 1);
  RunMetrics rm;
  rm.records.push_back(evaluate_checkpoint(m, stream, 1, &art, 1));
  rm.records.push_back(evaluate_checkpoint(m, stream, 2, &art, 1));
  rm.validate();
  CHECK(rm.records[1].acc_per_task.size() == 2);
  CHECK(rm.records[1].acc_avg == 1.0);
  CHECK(rm.records[1].asr_avg == 0.0);
  CHECK(rm.acc_history() == std::vector<Real>{1.0, 1.0});
  CHECK_THROWS_AS(evaluate_checkpoint(m, stream, 3, &art, 1), InputError);

  std::ostringstream out;
  write_metrics_csv(out, rm);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "task,acc_avg,asr_avg,acc_task,asr_task");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 2);

  rm.records[0].acc_avg = 1.5;
  CHECK_THROWS_AS(rm.validate(), InvariantError);
}
