#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "aop/core/losses.hpp"
#include "aop/core/prompted_model.hpp"
#include "aop/core/snapshot.hpp"
#include "helpers.hpp"

using namespace aop;
using namespace aop::testing;

#ifndef AOP_TEST_DATA_DIR
#define AOP_TEST_DATA_DIR "tests/data"
#endif

TEST_CASE("cosine similarity examples") {
  Vector v(3);
  v << 0.3, -1.2, 2.0;
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
  CHECK(cosine_similarity(Vector::Unit(2, 0), Vector::Unit(2, 1)) == 0.0);
  Vector a(2), b(2);
  a << 1, 1;
  b << 1, 0;
  CHECK(std::abs(cosine_similarity(a, b) - 1.0 / std::sqrt(2.0)) < 1e-6);
  CHECK_THROWS_AS(cosine_similarity(a, Vector::Zero(2)), DegenerateInputError);
}

TEST_CASE("cosine similarity is symmetric and scale invariant") {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    Vector a(6), b(6);
    for (int i = 0; i < 6; ++i) {
      a(i) = standard_normal(rng);
      b(i) = standard_normal(rng);
    }
    const Real c = 0.1 + 5 * uniform01(rng);
    CHECK(cosine_similarity(a, b) == doctest::Approx(cosine_similarity(b, a)).epsilon(1e-14));
    CHECK(cosine_similarity(Vector(c * a), b) == doctest::Approx(cosine_similarity(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("cosine gradient matches finite differences") {
  Vector q(4), k(4);
  q << 0.5, -1.0, 0.25, 2.0;
  k << 1.0, 0.3, -0.7, 0.2;
  const Vector fd = finite_difference([&](const Vector& kk) { return cosine_similarity(q, kk); }, k);
  CHECK(relative_error(cosine_similarity_grad_wrt_second(q, k), fd) < 1e-6);
}

namespace {

PromptPool<Real> pool_with_keys(const Matrix& keys, int top_k) {
  PromptPool<Real> pool;
  pool.keys = keys;
  pool.top_k = top_k;
  for (Eigen::Index i = 0; i < keys.rows(); ++i) pool.prompts.push_back(Matrix::Constant(1, keys.cols(), Real(i)));
  return pool;
}

}  // namespace

TEST_CASE("select_prompts examples") {
  SUBCASE("argmax over orthonormal keys") {
    const auto pool = pool_with_keys(Matrix::Identity(3, 3), 1);
    const auto sel = select_prompts(pool, Vector(Vector::Unit(3, 1)));
    REQUIRE(sel.indices.size() == 1);
    CHECK(sel.indices[0] == 1);
  }
  SUBCASE("ties go to the lower index") {
    const auto pool = pool_with_keys(Matrix::Ones(4, 3), 2);
    Vector q(3);
    q << 0.2, 0.9, -0.1;
    const auto sel = select_prompts(pool, q);
    CHECK(sel.indices == std::vector<int>{0, 1});
  }
  SUBCASE("sign symmetry") {
    Matrix keys(2, 2);
    keys << 1, 0, -1, 0;
    const auto pool = pool_with_keys(keys, 2);
    const auto sel = select_prompts(pool, Vector(Vector::Unit(2, 0)));
    CHECK(sel.similarities[0] == doctest::Approx(1.0));
    CHECK(sel.similarities[1] == doctest::Approx(-1.0));
  }
  SUBCASE("bad queries") {
    const auto pool = pool_with_keys(Matrix::Identity(3, 3), 1);
    CHECK_THROWS_AS(select_prompts(pool, Vector(Vector::Ones(2))), InputError);
    Vector nan = Vector::Ones(3);
    nan(1) = std::nan("");
    CHECK_THROWS_AS(select_prompts(pool, nan), InputError);
  }
}

TEST_CASE("select_prompts equals a brute-force sort") {
  Rng rng(2024);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + static_cast<int>(rng() % 32);
    const int d = 2 + static_cast<int>(rng() % 6);
    const int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    Matrix keys(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) keys(i, j) = std::round(4 * standard_normal(rng)) / 4 + 0.01;
    Vector q(d);
    for (int j = 0; j < d; ++j) q(j) = standard_normal(rng);
    const auto sel = select_prompts(pool_with_keys(keys, k), q);

    std::vector<std::pair<Real, int>> all;
    for (int i = 0; i < n; ++i) all.push_back({-cosine_similarity(q, Vector(keys.row(i).transpose())), i});
    std::sort(all.begin(), all.end());
    for (int i = 0; i < k; ++i) CHECK(sel.indices[static_cast<std::size_t>(i)] == all[static_cast<std::size_t>(i)].second);
  }
}

TEST_CASE("query is deterministic and batch-consistent") {
  const Backbone<Real> bb(small_config());
  Rng rng(9);
  Image x(16);
  for (int i = 0; i < 16; ++i) x(i) = uniform01(rng);
  CHECK(bb.query(x) == bb.query(x));
  Matrix batch(2, 16);
  batch.row(0) = x.transpose();
  batch.row(1) = x.transpose();
  const Matrix q = bb.queries(batch);
  CHECK(Vector(q.row(0).transpose()) == bb.query(x));
  CHECK(Vector(q.row(1).transpose()) == bb.query(x));
  CHECK_THROWS_AS(bb.query(Image::Zero(15)), InputError);
}

TEST_CASE("query matches the recorded golden vector") {
  // Backbone: small_config(5); image pixel i = ((i * 37) % 16) / 15.
  const Backbone<Real> bb(small_config());
  Image x(16);
  for (int i = 0; i < 16; ++i) x(i) = ((i * 37) % 16) / 15.0;
  std::ifstream in(std::filesystem::path(AOP_TEST_DATA_DIR) / "golden_query.txt");
  REQUIRE(in);
  std::vector<Real> golden;
  for (Real v; in >> v;) golden.push_back(v);
  const Vector q = bb.query(x);
  REQUIRE(golden.size() == static_cast<std::size_t>(q.size()));
  for (Eigen::Index i = 0; i < q.size(); ++i) CHECK(q(i) == doctest::Approx(golden[static_cast<std::size_t>(i)]).epsilon(1e-9));
}

TEST_CASE("losses") {
  Vector s = Vector::Zero(3);
  const auto bce = sigmoid_binary_cross_entropy(s, 1);
  CHECK(bce.gradient(1) == doctest::Approx(-0.5));
  CHECK(bce.gradient(0) == doctest::Approx(0.5));
  CHECK(bce.gradient(2) == doctest::Approx(0.5));
  CHECK(softmax_cross_entropy(Vector(Vector::Zero(2)), 0).loss == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(softmax_cross_entropy(s, 3), InputError);
  CHECK_THROWS_AS(sigmoid_binary_cross_entropy(s, -1), InputError);

  Vector big(2);
  big << 800.0, -800.0;
  CHECK(std::isfinite(sigmoid_binary_cross_entropy(big, 1).loss));
  CHECK(std::isfinite(softmax_cross_entropy(big, 1).loss));
}

namespace {

struct TinyModel {
  std::shared_ptr<const Backbone<Real>> backbone = make_backbone(four_pixel_config());
  PromptPool<Real> pool{4, 2, 8, 1, 17};
  ClassHead<Real> head{8};

  TinyModel() {
    head.register_classes({0, 1, 2});
    Rng rng(4);
    for (Eigen::Index i = 0; i < head.weight.size(); ++i) head.weight.data()[i] = standard_normal(rng);
  }
};

}  // namespace

TEST_CASE("prompted forward") {
  TinyModel m;
  Image x(4);
  x << 0.1, 0.7, 0.4, 0.9;

  SUBCASE("deterministic") {
    const auto a = prompted_forward(*m.backbone, m.pool, m.head, x);
    const auto b = prompted_forward(*m.backbone, m.pool, m.head, x);
    CHECK(a.logits == b.logits);
    CHECK(a.selection.indices == b.selection.indices);
  }
  SUBCASE("empty head is a state error") {
    ClassHead<Real> empty(8);
    CHECK_THROWS_AS(prompted_forward(*m.backbone, m.pool, empty, x), StateError);
  }
  SUBCASE("only the selected prompt matters") {
    const auto base = prompted_forward(*m.backbone, m.pool, m.head, x);
    const int chosen = base.selection.indices[0];
    auto pool = m.pool;
    // A constant shift of a token is erased by layer norm, so bump one entry.
    pool.prompts[static_cast<std::size_t>((chosen + 1) % 4)](0, 0) += 0.5;
    CHECK(prompted_forward(*m.backbone, pool, m.head, x).logits == base.logits);
    pool = m.pool;
    pool.prompts[static_cast<std::size_t>(chosen)](0, 0) += 0.5;
    CHECK(prompted_forward(*m.backbone, pool, m.head, x).logits != base.logits);
  }
  SUBCASE("inputs aligned with different keys select different prompts") {
    Image y(4);
    y << 0.9, 0.2, 0.8, 0.05;
    auto pool = m.pool;
    pool.keys.row(0) = m.backbone->query(x).transpose();
    pool.keys.row(3) = m.backbone->query(y).transpose();
    const auto sx = prompted_forward(*m.backbone, pool, m.head, x).selection;
    const auto sy = prompted_forward(*m.backbone, pool, m.head, y).selection;
    const Vector simx = key_similarities(pool, m.backbone->query(x));
    Eigen::Index bx = 0;
    simx.maxCoeff(&bx);
    CHECK(sx.indices[0] == bx);
    CHECK(sx.indices != sy.indices);
  }
  SUBCASE("head growth") {
    ClassHead<Real> head(8);
    head.register_classes({0, 1, 2, 3});
    head.register_classes({4, 5, 6, 7});
    CHECK(prompted_forward(*m.backbone, m.pool, head, x).logits.size() == 8);
    CHECK(head.register_classes({2, 7}) == 0);
  }
}

TEST_CASE("backbone input gradients match finite differences") {
  TinyModel m;
  Image x(4);
  x << 0.2, 0.6, 0.35, 0.8;
  const Matrix prompts = m.pool.gather({1});
  Vector w(8);
  for (int i = 0; i < 8; ++i) w(i) = std::sin(1.0 + i);
  Backbone<Real>::Trace trace;
  m.backbone->forward(x, prompts, &trace);
  const auto g = m.backbone->backward(trace, w);

  const Vector fd_x = finite_difference([&](const Vector& xx) { return w.dot(m.backbone->forward(xx, prompts, nullptr)); }, x);
  CHECK(relative_error(g.image, fd_x) < 1e-6);

  const Vector p = Eigen::Map<const Vector>(prompts.data(), prompts.size());
  const Vector fd_p = finite_difference(
      [&](const Vector& pp) {
        return w.dot(m.backbone->forward(x, Eigen::Map<const Matrix>(pp.data(), prompts.rows(), prompts.cols()), nullptr));
      },
      p);
  CHECK(relative_error(Eigen::Map<const Vector>(g.prompts.data(), g.prompts.size()), fd_p) < 1e-6);
}

TEST_CASE("snapshot round trip") {
  TinyModel m;
  ModelSnapshot snap;
  snap.backbone = m.backbone->config();
  snap.backbone_weights = m.backbone->parameters();
  snap.backbone_fingerprint = m.backbone->fingerprint();
  snap.pool = m.pool;
  snap.head = m.head;
  // Float32 storage: round the trainable arrays first so equality is exact.
  auto to_f = [](auto& t) { t = t.unaryExpr([](Real v) { return Real(static_cast<float>(v)); }); };
  to_f(snap.pool.keys);
  for (auto& p : snap.pool.prompts) to_f(p);
  to_f(snap.head.weight);
  snap.trained_tasks = {0, 1};

  const auto dir = std::filesystem::temp_directory_path() / "aop_test_snapshot";
  std::filesystem::create_directories(dir);
  save_snapshot(dir / "m.bin", snap);
  const auto back = load_snapshot(dir / "m.bin");
  CHECK(back.backbone == snap.backbone);
  CHECK(back.backbone_fingerprint == snap.backbone_fingerprint);
  CHECK(Backbone<Real>(back.backbone, back.backbone_weights).fingerprint() == m.backbone->fingerprint());
  CHECK(back.pool == snap.pool);
  CHECK(back.head == snap.head);
  CHECK(back.trained_tasks == snap.trained_tasks);

  CHECK_THROWS_AS(load_snapshot(dir / "missing.bin"), IoError);
  std::ofstream(dir / "junk.bin") << "not a snapshot";
  CHECK_THROWS_AS(load_snapshot(dir / "junk.bin"), ParseError);
  std::filesystem::remove_all(dir);
}
