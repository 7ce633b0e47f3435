#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "aop/core/random.hpp"
#include "aop/learner/learner.hpp"

namespace aop::testing {

/// 1x2x2 images with 1x1 patches: four pixels, small enough for
/// finite differences over every input.
inline BackboneConfig four_pixel_config(std::uint64_t seed = 3) {
  BackboneConfig c;
  c.image = {1, 2, 2};
  c.patch_size = 1;
  c.feature_dim = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.mlp_dim = 16;
  c.seed = seed;
  return c;
}

inline BackboneConfig small_config(std::uint64_t seed = 5) {
  BackboneConfig c;
  c.image = {1, 4, 4};
  c.patch_size = 2;
  c.feature_dim = 16;
  c.num_layers = 1;
  c.num_heads = 2;
  c.mlp_dim = 32;
  c.seed = seed;
  return c;
}

inline std::shared_ptr<const Backbone<Real>> make_backbone(const BackboneConfig& c) {
  return std::make_shared<const Backbone<Real>>(c);
}

/// 4x4 images; class c lights pixel (c mod 4) inside every 2x2 patch, so
/// classes differ in patch content rather than patch position.
inline Dataset patch_pattern_data(const std::vector<ClassId>& classes, int per_class, std::uint64_t seed,
                                  double noise = 0.03) {
  Rng rng(seed);
  Dataset out;
  for (int i = 0; i < per_class; ++i) {
    for (ClassId c : classes) {
      Image x = Image::Constant(16, 0.2);
      const int q = static_cast<int>(c % 4);
      for (int pr = 0; pr < 2; ++pr)
        for (int pc = 0; pc < 2; ++pc) x((pr * 2 + q / 2) * 4 + pc * 2 + q % 2) = 0.8;
      for (Eigen::Index k = 0; k < x.size(); ++k)
        x(k) = std::clamp(x(k) + noise * standard_normal(rng), 0.0, 1.0);
      out.push_back({x, c});
    }
  }
  return out;
}

/// Fixed-logit model for metric and defense tests.
class StubModel final : public ClassifierModel {
 public:
  StubModel(std::vector<ClassId> ids, std::function<Vector(const Image&)> f)
      : ids_(std::move(ids)), f_(std::move(f)) {}

  Vector logits(const Image& x) const override { return f_(x); }
  const std::vector<ClassId>& class_ids() const override { return ids_; }

 private:
  std::vector<ClassId> ids_;
  std::function<Vector(const Image&)> f_;
};

/// Model whose prediction is stored in pixel 0 of the image (as a class
/// index) and whose prompt choice is stored in pixel 1.
class PixelCodedModel final : public ClassifierModel {
 public:
  PixelCodedModel(int classes, int prompts) : prompts_(prompts) {
    for (int c = 0; c < classes; ++c) ids_.push_back(c);
  }

  Vector logits(const Image& x) const override {
    Vector s = Vector::Zero(static_cast<Eigen::Index>(ids_.size()));
    const auto c = static_cast<Eigen::Index>(std::lround(x(0) * 10.0));
    s(std::clamp<Eigen::Index>(c, 0, s.size() - 1)) = 5.0;
    return s;
  }
  const std::vector<ClassId>& class_ids() const override { return ids_; }
  int pool_size() const override { return prompts_; }
  PromptSelection<Real> select(const Image& x) const override {
    PromptSelection<Real> sel;
    sel.indices = {std::clamp(static_cast<int>(std::lround(x(1) * 10.0)), 0, prompts_ - 1)};
    sel.similarities = {1.0};
    return sel;
  }
  Vector key_similarities(const Image& x) const override {
    Vector s = Vector::Zero(prompts_);
    s(select(x).indices[0]) = 1.0;
    return s;
  }

 private:
  int prompts_;
  std::vector<ClassId> ids_;
};

/// Image whose pixel 0 codes class `c` and pixel 1 codes prompt `p`.
inline Image coded_image(int c, int p, int size = 4) {
  Image x = Image::Zero(size);
  x(0) = c / 10.0;
  x(1) = p / 10.0;
  return x;
}

/// Central finite difference of f along every coordinate of x.
inline Vector finite_difference(const std::function<Real(const Vector&)>& f, const Vector& x, Real h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|b|_inf, tiny).
inline Real relative_error(const Vector& a, const Vector& b) {
  const Real scale = std::max(b.cwiseAbs().maxCoeff(), 1e-12);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace aop::testing
