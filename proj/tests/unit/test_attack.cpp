#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "aop/attack/pipeline.hpp"
#include "helpers.hpp"

using namespace aop;
using namespace aop::testing;

namespace {

LearnerConfig surrogate_config() {
  LearnerConfig c;
  c.pool_size = 6;
  c.prompt_length = 2;
  c.epochs = 3;
  c.batch_size = 8;
  c.learning_rate = 0.05;
  c.seed = 3;
  return c;
}

Dataset labelled(int classes, int per_class) {
  Dataset d;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) d.push_back({Image::Constant(4, 0.1 * c + 0.01 * i), c});
  return d;
}

AopConfig small_aop() {
  AopConfig c;
  c.surrogate = surrogate_config();
  c.static_epochs = 3;
  c.static_trigger.iterations = 10;
  c.transition_epochs = 2;
  c.dynamic.rounds = 3;
  c.dynamic.trigger_iterations_per_round = 5;
  c.seed = 21;
  return c;
}

AttackInputs small_inputs() {
  AttackInputs in;
  in.backbone = make_backbone(small_config());
  in.target_class = 0;
  in.target_data = patch_pattern_data({0}, 12, 70);
  in.surrogate_data = patch_pattern_data({101, 102, 103}, 12, 71);
  return in;
}

}  // namespace

TEST_CASE("partition_surrogate") {
  SUBCASE("even split") {
    const auto split = partition_surrogate(labelled(1, 100), 0.5, 7);
    CHECK(split.static_set.size() == 50);
    CHECK(split.dynamic_set.size() == 50);
    std::set<Real> a, b;
    for (const auto& s : split.static_set) a.insert(s.x(0));
    for (const auto& s : split.dynamic_set) b.insert(s.x(0));
    for (Real v : a) CHECK(b.count(v) == 0);
    CHECK(a.size() + b.size() == 100);
  }
  SUBCASE("deterministic") {
    const auto x = partition_surrogate(labelled(3, 10), 0.5, 7);
    const auto y = partition_surrogate(labelled(3, 10), 0.5, 7);
    CHECK(x.static_set == y.static_set);
    CHECK(x.dynamic_set == y.dynamic_set);
  }
  SUBCASE("stratified") {
    const auto split = partition_surrogate(labelled(10, 10), 0.5, 3);
    std::map<ClassId, int> s, d;
    for (const auto& x : split.static_set) ++s[x.label];
    for (const auto& x : split.dynamic_set) ++d[x.label];
    for (ClassId c = 0; c < 10; ++c) {
      CHECK(s[c] == 5);
      CHECK(d[c] == 5);
    }
  }
  CHECK_THROWS_AS(partition_surrogate(labelled(1, 4), 0.0, 1), InputError);
  CHECK_THROWS_AS(partition_surrogate(labelled(1, 4), 1.0, 1), InputError);
  CHECK_THROWS_AS(partition_surrogate(Dataset{}, 0.5, 1), InputError);
}

TEST_CASE("project_linf") {
  const Real eps = 16.0 / 255.0;
  Vector d(2);
  d << 0.1, -0.2;
  const Vector p = project_linf(d, eps);
  CHECK(p(0) == eps);
  CHECK(p(1) == -eps);
  Vector inside(3);
  inside << 0.01, -0.05, 0.0;
  CHECK(project_linf(inside, eps) == inside);
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    Vector r(10);
    for (int i = 0; i < 10; ++i) r(i) = standard_normal(rng);
    CHECK(project_linf(r, eps).cwiseAbs().maxCoeff() <= eps);
  }
}

TEST_CASE("trigger loss examples") {
  const Vector zero = Vector::Zero(3);
  CHECK(trigger_loss_gradient(zero, 0, LossMode::sigmoid_bce)(0) == doctest::Approx(-0.5));
  CHECK(trigger_loss_gradient(zero, 0, LossMode::sigmoid_bce)(2) == doctest::Approx(0.5));
  CHECK(trigger_loss(Vector(Vector::Zero(2)), 0, LossMode::softmax_ce) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK_THROWS_AS(trigger_loss(zero, 5, LossMode::softmax_ce), InputError);
}

TEST_CASE("BCE gradient is sigmoid minus one-hot") {
  Rng rng(100);
  for (int t = 0; t < 100; ++t) {
    Vector s(6);
    for (int i = 0; i < 6; ++i) s(i) = 4 * standard_normal(rng);
    const int target = static_cast<int>(rng() % 6);
    const Vector g = trigger_loss_gradient(s, target, LossMode::sigmoid_bce);
    for (int j = 0; j < 6; ++j) {
      const Real expect = 1.0 / (1.0 + std::exp(-s(j))) - (j == target ? 1.0 : 0.0);
      CHECK(std::abs(g(j) - expect) <= 1e-8);
    }
  }
}

TEST_CASE("BCE target gradient ignores other logits; CE does not") {
  Vector s(4);
  s << 0.3, -1.0, 2.0, 0.5;
  Vector t = s;
  t(2) += 1.5;
  CHECK(trigger_loss_gradient(s, 0, LossMode::sigmoid_bce)(0) == trigger_loss_gradient(t, 0, LossMode::sigmoid_bce)(0));
  CHECK(trigger_loss_gradient(s, 0, LossMode::softmax_ce)(0) != trigger_loss_gradient(t, 0, LossMode::softmax_ce)(0));
}

TEST_CASE("trigger gradient matches finite differences on a 4-pixel input") {
  auto bb = make_backbone(four_pixel_config());
  Learner sur(bb, surrogate_config());
  sur.register_classes({0, 1, 2});
  Dataset train;
  Rng rng(8);
  for (int i = 0; i < 12; ++i) {
    Image x(4);
    for (int k = 0; k < 4; ++k) x(k) = 0.2 + 0.6 * uniform01(rng);
    train.push_back({x, i % 3});
  }
  sur.train_task(train, 2);
  const Dataset d_m(train.begin(), train.begin() + 4);
  Dataset target_only;
  for (auto s : d_m) {
    s.label = 1;
    target_only.push_back(s);
  }
  Image delta(4);
  delta << 0.02, -0.03, 0.01, 0.04;
  for (LossMode mode : {LossMode::softmax_ce, LossMode::sigmoid_bce}) {
    Image grad;
    trigger_objective(sur, target_only, delta, 1, mode, &grad);
    const Vector fd = finite_difference(
        [&](const Vector& d) { return trigger_objective(sur, target_only, d, 1, mode); }, delta);
    CHECK(relative_error(grad, fd) < 1e-4);
  }
}

TEST_CASE("optimize_trigger lowers the loss and respects the bound") {
  const auto in = small_inputs();
  Learner sur(in.backbone, surrogate_config());
  const auto split = partition_surrogate(in.surrogate_data, 0.5, 1);
  static_stage(sur, split, in.target_data, 3);
  auto art = TriggerArtifact::zeros(in.backbone->image_shape(), 0);
  const Real before = trigger_objective(sur, in.target_data, art.delta, 0, LossMode::softmax_ce);
  std::vector<TriggerStep> steps;
  art = optimize_trigger(sur, in.target_data, art, {15, 0.01, LossMode::softmax_ce}, &steps);
  CHECK(trigger_objective(sur, in.target_data, art.delta, 0, LossMode::softmax_ce) < before);
  CHECK(art.linf_norm() <= art.epsilon);
  CHECK(steps.size() == 15);
  for (const auto& s : steps) CHECK(s.linf <= art.epsilon);
  CHECK_THROWS_AS(optimize_trigger(sur, Dataset{}, art, {}), InputError);
  Learner fresh(in.backbone, surrogate_config());
  fresh.register_classes({0});
  CHECK_THROWS_AS(optimize_trigger(fresh, in.target_data, art, {}), StateError);
}

TEST_CASE("surrogate stages") {
  const auto in = small_inputs();
  Learner sur(in.backbone, surrogate_config());
  const auto split = partition_surrogate(in.surrogate_data, 0.5, 1);
  const auto fp = in.backbone->fingerprint();
  CHECK_THROWS_AS(transition_stage(sur, split, 1), StateError);

  static_stage(sur, split, in.target_data, 4);
  const Dataset union_set = concat(split.static_set, in.target_data);
  CHECK(evaluate_accuracy(sur, union_set) >= 0.9);
  CHECK(class_recall(sur, in.target_data, 0) > 0);
  CHECK(in.backbone->fingerprint() == fp);

  const Real acc_before = evaluate_accuracy(sur, split.dynamic_set);
  const auto pool_before = sur.pool();
  transition_stage(sur, split, 3);
  CHECK(!(sur.pool() == pool_before));
  CHECK(evaluate_accuracy(sur, split.dynamic_set) >= acc_before);
  CHECK(in.backbone->fingerprint() == fp);

  Dataset collide = in.target_data;
  for (auto& s : collide) s.label = 101;
  Learner other(in.backbone, surrogate_config());
  CHECK_THROWS_AS(static_stage(other, split, collide, 1), InputError);
}

TEST_CASE("dynamic rounds") {
  const auto in = small_inputs();
  const auto split = partition_surrogate(in.surrogate_data, 0.5, 1);
  Learner sur(in.backbone, surrogate_config());
  static_stage(sur, split, in.target_data, 3);
  transition_stage(sur, split, 2);
  const auto art = TriggerArtifact::zeros(in.backbone->image_shape(), 0);

  DynamicOptions none;
  none.rounds = 0;
  CHECK_THROWS_AS(dynamic_rounds(sur, split, in.target_data, art, none), InputError);

  SUBCASE("one round equals one trigger pass and one prompt epoch") {
    DynamicOptions one;
    one.rounds = 1;
    one.trigger_iterations_per_round = 4;
    Learner a = sur, b = sur;
    const auto via_rounds = dynamic_rounds(a, split, in.target_data, art, one);
    const auto manual = optimize_trigger(b, in.target_data, art, {4, one.learning_rate, one.loss_mode});
    b.train_task(split.dynamic_set, 1);
    CHECK(via_rounds.delta == manual.delta);
    CHECK(a.pool() == b.pool());
    CHECK(a.head() == b.head());
    CHECK(via_rounds.rounds == 1);
  }
  SUBCASE("bound after every round; prompt updates push the loss back up") {
    DynamicOptions opts;
    opts.rounds = 6;
    opts.trigger_iterations_per_round = 5;
    std::vector<DynamicRound> log;
    dynamic_rounds(sur, split, in.target_data, art, opts, &log);
    REQUIRE(log.size() == 6);
    int undone = 0;
    for (const auto& r : log) {
      CHECK(r.linf <= art.epsilon);
      if (r.loss_after_prompts >= r.loss_after_trigger) ++undone;
    }
    CHECK(2 * undone >= static_cast<int>(log.size()));
  }
}

TEST_CASE("poisoning") {
  Dataset d_m;
  for (int i = 0; i < 100; ++i) d_m.push_back({Image::Constant(4, 0.01 * i), 3});
  auto art = TriggerArtifact::zeros({1, 2, 2}, 3);
  art.delta.setConstant(art.epsilon);

  const auto plan = make_poison_plan(100, 3, 0.05, 9);
  CHECK(plan.poisoned_count() == 5);
  CHECK(plan.clean_count() == 95);
  CHECK(std::is_sorted(plan.selected.begin(), plan.selected.end()));
  const auto p = poison_dataset(d_m, art, plan);
  REQUIRE(p.samples.size() == 100);
  int changed = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(p.samples[i].label == 3);
    CHECK(p.samples[i].x.minCoeff() >= 0.0);
    CHECK(p.samples[i].x.maxCoeff() <= 1.0);
    if (p.samples[i].x != d_m[i].x) ++changed;
  }
  CHECK(changed == 5);

  const auto none = poison_dataset(d_m, art, make_poison_plan(100, 3, 0.0, 9));
  CHECK(none.samples == d_m);
  CHECK(make_poison_plan(10, 3, 0.25, 1).poisoned_count() == 2);
  CHECK(make_poison_plan(100, 3, 0.25, 1, std::size_t{7}).poisoned_count() == 7);
  CHECK(make_poison_plan(100, 3, 0.25, 1).selected == make_poison_plan(100, 3, 0.25, 1).selected);
  CHECK_THROWS_AS(make_poison_plan(100, 3, 1.5, 1), InputError);

  PoisonPlan bad = plan;
  bad.selected.back() = 100;
  CHECK_THROWS_AS(poison_dataset(d_m, art, bad), InputError);
}

TEST_CASE("apply_trigger_inference") {
  auto art = TriggerArtifact::zeros({1, 2, 2}, 0);
  art.delta.setConstant(16.0 / 255.0);
  CHECK(apply_trigger_inference(Image::Constant(4, 0.5), art)(0) == doctest::Approx(0.6882).epsilon(1e-4));
  auto strong = art;
  strong.delta.setConstant(0.188 / 3.0);
  CHECK(apply_trigger_inference(Image::Constant(4, 0.95), strong)(0) == 1.0);
  art.amplification = 0;
  const Image x = Image::Constant(4, 0.3);
  CHECK(apply_trigger_inference(x, art) == x);
}

TEST_CASE("trigger file round trip") {
  auto art = TriggerArtifact::zeros({1, 2, 2}, 42);
  art.delta << 0.01f, -0.02f, 0.03f, -0.0625f;
  art.loss_mode = LossMode::sigmoid_bce;
  art.iterations = 12;
  art.rounds = 3;
  art.seed = 99;
  const auto path = std::filesystem::temp_directory_path() / "aop_test_trigger.bin";
  save_trigger(path, art);
  const auto back = load_trigger(path);
  CHECK(back.delta == art.delta);
  CHECK(back.target_class == 42);
  CHECK(back.rounds == 3);
  CHECK(back.iterations == 12);
  CHECK(back.seed == 99);
  CHECK(back.loss_mode == LossMode::sigmoid_bce);
  CHECK(back.shape == art.shape);
  std::ofstream(path, std::ios::binary) << "garbage!";
  CHECK_THROWS_AS(load_trigger(path), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_trigger(path), IoError);
}

TEST_CASE("run_aop is deterministic and bounded") {
  const auto in = small_inputs();
  const auto cfg = small_aop();
  const auto a = run_aop(cfg, in);
  const auto b = run_aop(cfg, in);
  CHECK(a.trigger.delta == b.trigger.delta);
  CHECK(a.trigger.linf_norm() <= cfg.epsilon);
  CHECK(a.trigger.loss_mode == LossMode::sigmoid_bce);
  CHECK(a.static_trigger.loss_mode == LossMode::softmax_ce);
  for (const auto& d : a.log.delta_snapshots) CHECK(d.cwiseAbs().maxCoeff() <= cfg.epsilon);
  CHECK(a.log.rounds.size() == 3);
  CHECK(a.poisoned.samples.size() == in.target_data.size());
  CHECK(a.poisoned.plan.poisoned_count() == 3);
  for (const auto& s : a.poisoned.samples) CHECK(s.label == 0);

  auto skip = cfg;
  skip.skip_dynamic = true;
  const auto s = run_aop(skip, in);
  CHECK(s.log.rounds.empty());
  CHECK(s.trigger.delta == s.static_trigger.delta);

  auto bad_in = in;
  bad_in.target_data[0].label = 5;
  CHECK_THROWS_AS(run_aop(cfg, bad_in), InputError);
  auto bad = cfg;
  bad.dynamic.rounds = 0;
  CHECK_THROWS_AS(run_aop(bad, in), ConfigError);
}
