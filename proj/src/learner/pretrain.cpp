#include "aop/learner/pretrain.hpp"

#include <algorithm>
#include <numeric>

#include "aop/core/losses.hpp"
#include "aop/learner/adam.hpp"

namespace aop {

void PretrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw ConfigError("pretrain: epochs and batch size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("pretrain: learning rate must be positive");
}

Backbone<Real> pretrain_backbone(const BackboneConfig& config, const Dataset& source, const PretrainConfig& options,
                                 PretrainReport* report) {
  options.validate();
  if (source.empty()) throw InputError("pretrain: empty source set");
  const Backbone<Real> initial(config);
  using Params = Backbone<Real>::Parameters;
  Params params = initial.parameters();

  const std::vector<ClassId> classes = labels_of(source);
  if (classes.size() < 2) throw InputError("pretrain: source set needs at least two classes");
  const auto column = [&classes](ClassId id) {
    return static_cast<Eigen::Index>(std::lower_bound(classes.begin(), classes.end(), id) - classes.begin());
  };
  const Eigen::Index d = config.feature_dim;
  const Eigen::Index c = static_cast<Eigen::Index>(classes.size());
  Matrix head_w = Matrix::Zero(d, c);
  Vector head_b = Vector::Zero(c);

  Adam adam(AdamConfig{options.learning_rate});
  std::vector<std::size_t> order(source.size());
  const std::size_t batch = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(derive_seed(options.seed, "pretrain-shuffle"), static_cast<std::uint64_t>(epoch)));
    shuffle_in_place(order, rng);
    Real epoch_loss = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      // The encoder is rebuilt from the current weights for each step; it is
      // a value type and rebuilding keeps the frozen contract intact.
      const Backbone<Real> net(config, params);
      const std::size_t stop = std::min(order.size(), start + batch);
      Params grads = params.zeros_like();
      Matrix g_w = Matrix::Zero(d, c);
      Vector g_b = Vector::Zero(c);
      for (std::size_t i = start; i < stop; ++i) {
        const Sample& s = source[order[i]];
        Backbone<Real>::Trace trace;
        const Vector feature = net.forward(s.x, Matrix(0, d), &trace);
        const Vector logits = head_w.transpose() * feature + head_b;
        const Eigen::Index target = column(s.label);
        const auto loss = softmax_cross_entropy(logits, target);
        epoch_loss += loss.loss;
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        correct += best == target ? 1 : 0;
        g_w += feature * loss.gradient.transpose();
        g_b += loss.gradient;
        const Params g = net.parameter_gradients(trace, head_w * loss.gradient);
        auto acc = grads.views();
        const auto add = g.views();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += add[k];
      }
      const Real scale = 1.0 / static_cast<Real>(stop - start);
      adam.next_step();
      auto p_views = params.views();
      auto g_views = grads.views();
      std::size_t slot = 0;
      for (std::size_t k = 0; k < p_views.size(); ++k, ++slot) {
        g_views[k] *= scale;
        adam.update(slot, p_views[k], g_views[k]);
      }
      g_w *= scale;
      g_b *= scale;
      adam.update(slot, head_w, g_w);
      adam.update(slot + 1, head_b, g_b);
    }
    if (report) {
      report->loss.push_back(epoch_loss / static_cast<Real>(source.size()));
      report->accuracy.push_back(static_cast<Real>(correct) / static_cast<Real>(source.size()));
    }
  }
  return Backbone<Real>(config, std::move(params));
}

}  // namespace aop
