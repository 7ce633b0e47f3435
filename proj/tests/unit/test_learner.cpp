#include <doctest.h>

#include "aop/learner/learner.hpp"
#include "helpers.hpp"

using namespace aop;
using namespace aop::testing;

namespace {

LearnerConfig small_learner(std::uint64_t seed = 1) {
  LearnerConfig c;
  c.pool_size = 6;
  c.prompt_length = 2;
  c.top_k = 1;
  c.epochs = 5;
  c.batch_size = 8;
  c.learning_rate = 0.05;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("train_task fits a separable toy task") {
  auto bb = make_backbone(small_config());
  Learner l(bb, small_learner());
  l.register_classes({0, 1, 2, 3});
  const Dataset train = patch_pattern_data({0, 1, 2, 3}, 20, 11);
  const auto before = bb->fingerprint();
  l.train_task(train, 5);
  CHECK(evaluate_accuracy(l, train) >= 0.95);
  CHECK(bb->fingerprint() == before);
  CHECK(l.tasks_trained() == 1);
}

TEST_CASE("train_task input rules") {
  auto bb = make_backbone(small_config());
  Learner l(bb, small_learner());
  l.register_classes({0, 1});
  CHECK_THROWS_AS(l.train_task(Dataset{}, 1), InputError);
  const Dataset data = patch_pattern_data({0, 1}, 2, 1);
  CHECK_THROWS_AS(l.train_task(data, 0), InputError);
  CHECK_THROWS_AS(l.train_task(patch_pattern_data({2}, 2, 1), 1), StateError);
  CHECK(l.tasks_trained() == 0);
}

TEST_CASE("untrained learner cannot predict") {
  Learner l(make_backbone(small_config()), small_learner());
  CHECK_THROWS_AS(l.predict(Image::Zero(16)), StateError);
}

TEST_CASE("key-pull gradient matches finite differences") {
  auto bb = make_backbone(four_pixel_config());
  LearnerConfig cfg = small_learner();
  cfg.lambda = 0.7;
  Learner l(bb, cfg);
  l.register_classes({0, 1});
  Rng rng(5);
  for (Eigen::Index i = 0; i < l.head().weight.size(); ++i) l.head().weight.data()[i] = standard_normal(rng);
  Image x(4);
  x << 0.3, 0.8, 0.1, 0.55;
  const Sample s{x, 1};
  const std::vector<int> active{0, 1};
  const int k = l.select(x).indices[0];

  const auto g = l.sample_gradients(s, active);
  const Vector key = l.pool().keys.row(k).transpose();
  const Vector fd = finite_difference(
      [&](const Vector& kk) {
        Learner copy = l;
        copy.pool().keys.row(k) = kk.transpose();
        return copy.sample_objective(s, active);
      },
      key);
  CHECK(relative_error(Vector(g.keys.row(k).transpose()), fd) < 1e-4);
  // The classification loss does not see the key, so the gradient is the
  // key-pull term alone.
  const Vector pull = -cfg.lambda * cosine_similarity_grad_wrt_second(bb->query(x), key);
  CHECK(relative_error(Vector(g.keys.row(k).transpose()), pull) < 1e-12);
}

TEST_CASE("prompt and head gradients match finite differences") {
  auto bb = make_backbone(four_pixel_config());
  Learner l(bb, small_learner());
  l.register_classes({0, 1, 2});
  Rng rng(6);
  for (Eigen::Index i = 0; i < l.head().weight.size(); ++i) l.head().weight.data()[i] = standard_normal(rng);
  Image x(4);
  x << 0.6, 0.2, 0.9, 0.4;
  const Sample s{x, 2};
  const std::vector<int> active{0, 1, 2};
  const int k = l.select(x).indices[0];
  const auto g = l.sample_gradients(s, active);

  const Matrix& p0 = l.pool().prompts[static_cast<std::size_t>(k)];
  const Vector p = Eigen::Map<const Vector>(p0.data(), p0.size());
  const Vector fd = finite_difference(
      [&](const Vector& pp) {
        Learner copy = l;
        copy.pool().prompts[static_cast<std::size_t>(k)] = Eigen::Map<const Matrix>(pp.data(), p0.rows(), p0.cols());
        return copy.sample_objective(s, active);
      },
      p);
  const Matrix& gp = g.prompts[static_cast<std::size_t>(k)];
  CHECK(relative_error(Eigen::Map<const Vector>(gp.data(), gp.size()), fd) < 1e-4);

  const Vector w = Eigen::Map<const Vector>(l.head().weight.data(), l.head().weight.size());
  const Vector fd_w = finite_difference(
      [&](const Vector& ww) {
        Learner copy = l;
        copy.head().weight = Eigen::Map<const Matrix>(ww.data(), l.head().weight.rows(), l.head().weight.cols());
        return copy.sample_objective(s, active);
      },
      w);
  CHECK(relative_error(Eigen::Map<const Vector>(g.head_weight.data(), g.head_weight.size()), fd_w) < 1e-4);
}

TEST_CASE("key pull raises selected similarity on a frozen head") {
  auto bb = make_backbone(small_config());
  LearnerConfig cfg = small_learner();
  cfg.train_head = false;
  cfg.train_prompts = false;
  cfg.lambda = 1.0;
  Learner l(bb, cfg);
  l.register_classes({0, 1, 2, 3});
  const Dataset data = patch_pattern_data({0, 1, 2, 3}, 8, 3);
  const auto report = l.train_task(data, 6);
  for (std::size_t e = 1; e < report.epochs.size(); ++e) {
    CHECK(report.epochs[e].mean_selected_similarity >= report.epochs[e - 1].mean_selected_similarity - 1e-12);
  }
  CHECK(report.epochs.back().mean_selected_similarity > report.epochs.front().mean_selected_similarity);
}

TEST_CASE("forgetting is visible with a tiny pool and no key pull") {
  auto bb = make_backbone(small_config());
  bool dropped = false;
  for (std::uint64_t seed = 0; seed < 4 && !dropped; ++seed) {
    LearnerConfig cfg = small_learner(seed);
    cfg.pool_size = 1;
    cfg.lambda = 0;
    cfg.learning_rate = 0.1;
    Learner l(bb, cfg);
    const Dataset t1 = patch_pattern_data({0, 1}, 15, 20 + seed, 0.15);
    const Dataset t2 = patch_pattern_data({2, 3}, 15, 40 + seed, 0.15);
    l.register_classes({0, 1});
    l.train_task(t1, 5);
    const Real before = evaluate_accuracy(l, t1);
    l.register_classes({2, 3});
    l.train_task(t2, 10);
    const Real after = evaluate_accuracy(l, t1);
    MESSAGE("seed " << seed << ": task-1 accuracy " << before << " -> " << after);
    dropped = after < before;
  }
  CHECK(dropped);
}

TEST_CASE("predict and evaluate_accuracy on stubs") {
  StubModel one({7}, [](const Image&) { return Vector(Vector::Constant(1, 0.0)); });
  CHECK(one.predict(Image::Zero(4)) == 7);

  StubModel three({10, 11, 12}, [](const Image&) {
    Vector s(3);
    s << 2.0, 5.0, 1.0;
    return s;
  });
  CHECK(three.predict(Image::Zero(4)) == 11);

  const Dataset right(4, Sample{Image::Zero(4), 11});
  CHECK(evaluate_accuracy(three, right) == 1.0);
  const Dataset wrong(4, Sample{Image::Zero(4), 10});
  CHECK(evaluate_accuracy(three, wrong) == 0.0);
  Dataset mixed = right;
  mixed[2].label = 12;
  CHECK(evaluate_accuracy(three, mixed) == 0.75);
  CHECK_THROWS_AS(evaluate_accuracy(three, Dataset{}), InputError);
  CHECK(three.top_k(Image::Zero(4), 2) == std::vector<ClassId>{11, 10});
}

TEST_CASE("snapshot restores an identical learner") {
  auto bb = make_backbone(small_config());
  Learner l(bb, small_learner());
  l.register_classes({0, 1, 2, 3});
  l.train_task(patch_pattern_data({0, 1, 2, 3}, 5, 8), 1);
  const auto snap = l.snapshot();
  Learner r = Learner::restore(snap, LearnerConfig{});
  CHECK(r.pool() == l.pool());
  CHECK(r.head() == l.head());
  CHECK(r.tasks_trained() == 1);
  const Image x = patch_pattern_data({2}, 1, 99)[0].x;
  CHECK(r.logits(x) == l.logits(x));
}
