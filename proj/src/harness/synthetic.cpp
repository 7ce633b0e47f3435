#include "aop/harness/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "aop/core/random.hpp"

namespace aop {

namespace {

constexpr Real kTwoPi = 6.283185307179586;

struct Component {
  Real a = 0, b = 0, c = 0, d = 0;  // family-specific geometry
  std::array<Real, 8> color{};      // per-channel weight, up to 8 channels
};

struct Prototype {
  std::vector<Component> parts;
  std::array<Real, 8> base{};
};

Prototype make_prototype(PatternFamily family, const ImageShape& shape, Rng& rng) {
  Prototype p;
  for (int c = 0; c < shape.channels && c < 8; ++c) p.base[static_cast<std::size_t>(c)] = 0.1 * (2 * uniform01(rng) - 1);
  const int parts = family == PatternFamily::blobs ? 3 : 2;
  for (int k = 0; k < parts; ++k) {
    Component comp;
    switch (family) {
      case PatternFamily::gratings:
        comp.a = kTwoPi * uniform01(rng);            // orientation
        comp.b = 1.0 + 3.0 * uniform01(rng);         // cycles across the image
        comp.c = kTwoPi * uniform01(rng);            // phase
        break;
      case PatternFamily::blobs:
        comp.a = 0.15 + 0.7 * uniform01(rng);        // centre x (fraction)
        comp.b = 0.15 + 0.7 * uniform01(rng);        // centre y
        comp.c = 0.08 + 0.15 * uniform01(rng);       // radius (fraction)
        break;
      case PatternFamily::checkers:
        comp.a = 2.0 + std::floor(4.0 * uniform01(rng));  // cells per side
        comp.b = kTwoPi * uniform01(rng);                 // rotation
        comp.c = uniform01(rng);                          // offset
        break;
    }
    for (int c = 0; c < shape.channels && c < 8; ++c)
      comp.color[static_cast<std::size_t>(c)] = 2 * uniform01(rng) - 1;
    p.parts.push_back(comp);
  }
  return p;
}

Real component_value(PatternFamily family, const Component& comp, Real u, Real v) {
  switch (family) {
    case PatternFamily::gratings:
      return std::sin(kTwoPi * comp.b * (std::cos(comp.a) * u + std::sin(comp.a) * v) + comp.c);
    case PatternFamily::blobs: {
      const Real dx = u - comp.a;
      const Real dy = v - comp.b;
      return 2.0 * std::exp(-(dx * dx + dy * dy) / (2 * comp.c * comp.c)) - 0.5;
    }
    case PatternFamily::checkers: {
      const Real ru = std::cos(comp.b) * u - std::sin(comp.b) * v + comp.c;
      const Real rv = std::sin(comp.b) * u + std::cos(comp.b) * v + comp.c;
      const long iu = static_cast<long>(std::floor(ru * comp.a));
      const long iv = static_cast<long>(std::floor(rv * comp.a));
      return ((iu + iv) & 1) ? 1.0 : -1.0;
    }
  }
  return 0;
}

Image render(const SyntheticSpec& spec, const Prototype& proto, Rng& rng) {
  const ImageShape& s = spec.shape;
  const Real shift_x = spec.jitter * (2 * uniform01(rng) - 1) / s.width;
  const Real shift_y = spec.jitter * (2 * uniform01(rng) - 1) / s.height;
  const Real gain = 0.85 + 0.3 * uniform01(rng);
  Image x(s.size());
  for (int c = 0; c < s.channels; ++c) {
    const auto ci = static_cast<std::size_t>(std::min(c, 7));
    for (int yy = 0; yy < s.height; ++yy) {
      for (int xx = 0; xx < s.width; ++xx) {
        const Real u = (xx + 0.5) / s.width + shift_x;
        const Real v = (yy + 0.5) / s.height + shift_y;
        Real value = 0;
        for (const auto& comp : proto.parts) value += comp.color[ci] * component_value(spec.family, comp, u, v);
        value = 0.5 + proto.base[ci] + gain * spec.amplitude * value + spec.noise_std * standard_normal(rng);
        // Quantized to float so pack files round-trip exactly.
        x((static_cast<Eigen::Index>(c) * s.height + yy) * s.width + xx) =
            static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  }
  return x;
}

}  // namespace

std::string to_string(PatternFamily family) {
  switch (family) {
    case PatternFamily::gratings: return "gratings";
    case PatternFamily::blobs: return "blobs";
    case PatternFamily::checkers: return "checkers";
  }
  return "unknown";
}

PatternFamily parse_pattern_family(const std::string& text) {
  if (text == "gratings") return PatternFamily::gratings;
  if (text == "blobs") return PatternFamily::blobs;
  if (text == "checkers") return PatternFamily::checkers;
  throw ConfigError("unknown pattern family '" + text + "'");
}

void SyntheticSpec::validate() const {
  if (shape.channels < 1 || shape.height < 1 || shape.width < 1) throw ConfigError("synthetic: invalid image shape");
  if (num_tasks < 1 || classes_per_task < 1 || train_per_class < 1 || test_per_class < 0) {
    throw ConfigError("synthetic: task/class/sample counts must be positive");
  }
  if (!(amplitude >= 0) || !(noise_std >= 0) || !(jitter >= 0)) {
    throw ConfigError("synthetic: amplitude, noise and jitter must be non-negative");
  }
}

ContinualTaskStream generate_synthetic_stream(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  ContinualTaskStream stream;
  stream.shape = spec.shape;
  const std::uint64_t family_seed = derive_seed(seed, "synthetic-" + to_string(spec.family));
  ClassId next = spec.first_class_id;
  for (int t = 0; t < spec.num_tasks; ++t) {
    TaskData task;
    for (int m = 0; m < spec.classes_per_task; ++m, ++next) {
      const auto class_index = static_cast<std::uint64_t>(next - spec.first_class_id);
      Rng proto_rng(derive_seed(family_seed, class_index));
      const Prototype proto = make_prototype(spec.family, spec.shape, proto_rng);
      Rng sample_rng(derive_seed(derive_seed(family_seed, "samples"), class_index));
      task.classes.push_back(next);
      for (int i = 0; i < spec.train_per_class; ++i) task.train.push_back({render(spec, proto, sample_rng), next});
      for (int i = 0; i < spec.test_per_class; ++i) task.test.push_back({render(spec, proto, sample_rng), next});
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

Dataset flatten_train(const ContinualTaskStream& stream) {
  Dataset out;
  for (const auto& t : stream.tasks) out.insert(out.end(), t.train.begin(), t.train.end());
  return out;
}

void SourceSpec::validate() const {
  if (classes_per_family < 1 || samples_per_class < 1) throw ConfigError("source: counts must be positive");
  if (!(amplitude >= 0) || !(noise_std >= 0) || !(jitter >= 0)) {
    throw ConfigError("source: amplitude, noise and jitter must be non-negative");
  }
}

Dataset generate_source_dataset(const ImageShape& shape, const SourceSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset out;
  ClassId next = 0;
  for (PatternFamily family : {PatternFamily::gratings, PatternFamily::blobs, PatternFamily::checkers}) {
    SyntheticSpec s;
    s.shape = shape;
    s.num_tasks = 1;
    s.classes_per_task = spec.classes_per_family;
    s.train_per_class = spec.samples_per_class;
    s.test_per_class = 0;
    s.family = family;
    s.amplitude = spec.amplitude;
    s.noise_std = spec.noise_std;
    s.jitter = spec.jitter;
    s.first_class_id = next;
    const auto stream = generate_synthetic_stream(s, derive_seed(seed, "source-" + to_string(family)));
    for (const auto& sample : stream.tasks.front().train) out.push_back(sample);
    next += spec.classes_per_family;
  }
  return out;
}

}  // namespace aop
