#include "aop/attack/trigger.hpp"

#include <fstream>
#include <string>

#include "aop/core/binary_io.hpp"

namespace aop {

TriggerArtifact TriggerArtifact::zeros(const ImageShape& shape, ClassId target, Real epsilon,
                                       Real amplification) {
  if (!(epsilon > 0)) throw InputError("trigger epsilon must be positive");
  TriggerArtifact a;
  a.shape = shape;
  a.delta = Image::Zero(shape.size());
  a.epsilon = epsilon;
  a.amplification = amplification;
  a.target_class = target;
  return a;
}

void TriggerArtifact::check_bound() const {
  if (delta.size() != shape.size()) throw InvariantError("trigger shape mismatch");
  if (!delta.allFinite()) throw InvariantError("trigger has non-finite entries");
  if (linf_norm() > epsilon) {
    throw InvariantError("trigger l-inf norm " + std::to_string(linf_norm()) + " exceeds epsilon " +
                         std::to_string(epsilon));
  }
}

Real trigger_loss(const Vector& logits, Eigen::Index target, LossMode mode) {
  return classification_loss(logits, target, mode).loss;
}

Vector trigger_loss_gradient(const Vector& logits, Eigen::Index target, LossMode mode) {
  return classification_loss(logits, target, mode).gradient;
}

Real trigger_objective(const Learner& surrogate, const Dataset& d_m, const Image& delta, ClassId target,
                       LossMode mode, Image* grad) {
  const int column = surrogate.head().column_of(target);
  if (column < 0) throw InputError("trigger target class is not registered in the surrogate head");
  if (grad) *grad = Image::Zero(delta.size());
  Real total = 0;
  const auto& backbone = surrogate.backbone();
  for (const auto& s : d_m) {
    const Image raw = s.x + delta;
    const Image x = raw.cwiseMax(0.0).cwiseMin(1.0);
    Backbone<Real>::Trace trace;
    const auto out = surrogate.forward(x, grad ? &trace : nullptr);
    const auto loss = classification_loss(out.logits, column, mode);
    total += loss.loss;
    if (grad) {
      const Vector grad_feature = surrogate.head().weight * loss.gradient;
      const auto ig = backbone.backward(trace, grad_feature);
      // Clipped pixels pass no gradient.
      *grad += ig.image.cwiseProduct(
          ((raw.array() >= 0.0) && (raw.array() <= 1.0)).cast<Real>().matrix());
    }
  }
  return total;
}

TriggerArtifact optimize_trigger(const Learner& surrogate, const Dataset& d_m, TriggerArtifact artifact,
                                 const TriggerOptions& options, std::vector<TriggerStep>* log) {
  if (d_m.empty()) throw InputError("optimize_trigger: empty target-class dataset");
  if (options.iterations < 1) throw InputError("optimize_trigger: iterations must be at least 1");
  if (!(options.learning_rate > 0)) throw InputError("optimize_trigger: learning rate must be positive");
  if (surrogate.tasks_trained() == 0) throw StateError("optimize_trigger: surrogate has not been trained");
  artifact.check_bound();

  Adam adam(AdamConfig{options.learning_rate});
  Image grad;
  for (int i = 0; i < options.iterations; ++i) {
    const Real loss = trigger_objective(surrogate, d_m, artifact.delta, artifact.target_class,
                                       options.loss_mode, &grad);
    adam.next_step();
    adam.update(0, artifact.delta, grad);
    artifact.delta = project_linf(artifact.delta, artifact.epsilon);
    artifact.check_bound();
    if (log) log->push_back({artifact.iterations, loss, artifact.linf_norm()});
    ++artifact.iterations;
  }
  artifact.loss_mode = options.loss_mode;
  artifact.learning_rate = options.learning_rate;
  return artifact;
}

Image apply_trigger_inference(const Image& x, const TriggerArtifact& artifact) {
  if (x.size() != artifact.delta.size()) throw InputError("apply_trigger_inference: shape mismatch");
  return (x + artifact.amplification * artifact.delta).cwiseMax(0.0).cwiseMin(1.0);
}

void save_trigger(const std::filesystem::path& path, const TriggerArtifact& a) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write("AOPTRIG1", 8);
  write_u32(os, static_cast<std::uint32_t>(a.shape.channels));
  write_u32(os, static_cast<std::uint32_t>(a.shape.height));
  write_u32(os, static_cast<std::uint32_t>(a.shape.width));
  write_f32(os, static_cast<float>(a.epsilon));
  write_f32(os, static_cast<float>(a.amplification));
  write_u32(os, a.loss_mode == LossMode::softmax_ce ? 0u : 1u);
  write_i64(os, a.target_class);
  write_u64(os, a.seed);
  write_u32(os, static_cast<std::uint32_t>(a.iterations));
  write_u32(os, static_cast<std::uint32_t>(a.rounds));
  write_f32(os, static_cast<float>(a.learning_rate));
  for (Eigen::Index i = 0; i < a.delta.size(); ++i) write_f32(os, static_cast<float>(a.delta(i)));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

TriggerArtifact load_trigger(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open trigger file '" + path.string() + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != "AOPTRIG1") {
    throw ParseError("'" + path.string() + "' is not a trigger file");
  }
  TriggerArtifact a;
  a.shape.channels = static_cast<int>(read_u32(is));
  a.shape.height = static_cast<int>(read_u32(is));
  a.shape.width = static_cast<int>(read_u32(is));
  if (a.shape.channels <= 0 || a.shape.height <= 0 || a.shape.width <= 0 || a.shape.size() > (1 << 24)) {
    throw ParseError("trigger file has an invalid shape");
  }
  a.epsilon = read_f32(is);
  a.amplification = read_f32(is);
  const std::uint32_t mode = read_u32(is);
  if (mode > 1) throw ParseError("trigger file has an unknown loss mode");
  a.loss_mode = mode == 0 ? LossMode::softmax_ce : LossMode::sigmoid_bce;
  a.target_class = read_i64(is);
  a.seed = read_u64(is);
  a.iterations = static_cast<int>(read_u32(is));
  a.rounds = static_cast<int>(read_u32(is));
  a.learning_rate = read_f32(is);
  a.delta.resize(a.shape.size());
  for (Eigen::Index i = 0; i < a.delta.size(); ++i) a.delta(i) = read_f32(is);
  // The bound is re-checked at the file's float precision.
  if (a.linf_norm() > static_cast<Real>(static_cast<float>(a.epsilon))) {
    throw ValidationError("trigger file violates its own epsilon bound");
  }
  return a;
}

}  // namespace aop
