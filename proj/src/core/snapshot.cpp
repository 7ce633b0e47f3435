#include "aop/core/snapshot.hpp"

#include "aop/core/binary_io.hpp"

namespace aop {

namespace {
constexpr const char* kMagic = "AOPMODL1";
}

void save_snapshot(const std::filesystem::path& path, const ModelSnapshot& s) {
  RecordFile file;
  const auto& b = s.backbone;
  file.put_i64("backbone.dims", {9},
               {b.image.channels, b.image.height, b.image.width, b.patch_size, b.feature_dim,
                b.num_layers, b.num_heads, b.mlp_dim, static_cast<std::int64_t>(b.seed)});
  file.put_f64("backbone.scalars", {3}, {b.pixel_mean, b.pixel_std, b.token_init_std});
  file.put_i64("backbone.fingerprint", {1}, {static_cast<std::int64_t>(s.backbone_fingerprint)});
  std::size_t index = 0;
  s.backbone_weights.for_each([&](const auto& t) {
    file.put_f32("backbone.weight." + std::to_string(index++),
                 {static_cast<std::uint64_t>(t.rows()), static_cast<std::uint64_t>(t.cols())}, to_std_vector(t));
  });

  const auto n_p = static_cast<std::uint64_t>(s.pool.size());
  const auto len = static_cast<std::uint64_t>(s.pool.prompt_length());
  const auto dim = static_cast<std::uint64_t>(s.pool.feature_dim());
  file.put_f32("pool.keys", {n_p, dim}, to_std_vector(s.pool.keys));
  std::vector<double> prompts;
  for (const auto& p : s.pool.prompts) {
    auto flat = to_std_vector(p);
    prompts.insert(prompts.end(), flat.begin(), flat.end());
  }
  file.put_f32("pool.prompts", {n_p, len, dim}, prompts);
  file.put_i64("pool.top_k", {1}, {s.pool.top_k});

  const auto classes = static_cast<std::uint64_t>(s.head.num_classes());
  const auto hdim = static_cast<std::uint64_t>(s.head.feature_dim());
  file.put_f32("head.weight", {hdim, classes}, to_std_vector(s.head.weight));
  file.put_f32("head.bias", {classes}, to_std_vector(s.head.bias));
  file.put_i64("head.classes", {classes}, s.head.classes);
  file.put_i64("learner.trained_tasks", {s.trained_tasks.size()}, s.trained_tasks);
  file.save(path, kMagic);
}

ModelSnapshot load_snapshot(const std::filesystem::path& path) {
  const RecordFile file = RecordFile::load(path, kMagic);
  ModelSnapshot s;
  const auto& dims = file.get("backbone.dims").ints;
  const auto& scalars = file.get("backbone.scalars").reals;
  if (dims.size() != 9 || scalars.size() != 3) throw ParseError("snapshot: malformed backbone record");
  auto& b = s.backbone;
  b.image = ImageShape{static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
  b.patch_size = static_cast<int>(dims[3]);
  b.feature_dim = static_cast<int>(dims[4]);
  b.num_layers = static_cast<int>(dims[5]);
  b.num_heads = static_cast<int>(dims[6]);
  b.mlp_dim = static_cast<int>(dims[7]);
  b.seed = static_cast<std::uint64_t>(dims[8]);
  b.pixel_mean = scalars[0];
  b.pixel_std = scalars[1];
  b.token_init_std = scalars[2];
  s.backbone_fingerprint = static_cast<std::uint64_t>(file.get("backbone.fingerprint").ints.at(0));
  s.backbone_weights = Backbone<Real>(b).parameters();
  std::size_t index = 0;
  s.backbone_weights.for_each([&](auto& t) {
    const std::string name = "backbone.weight." + std::to_string(index++);
    if (!file.contains(name)) throw ParseError("snapshot: missing record " + name);
    const auto& rec = file.get(name);
    if (rec.shape.size() != 2 || rec.shape[0] != static_cast<std::uint64_t>(t.rows()) ||
        rec.shape[1] != static_cast<std::uint64_t>(t.cols())) {
      throw ParseError("snapshot: record " + name + " has the wrong shape");
    }
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = rec.reals[static_cast<std::size_t>(r * t.cols() + c)];
  });
  if (Backbone<Real>(b, s.backbone_weights).fingerprint() != s.backbone_fingerprint) {
    throw ValidationError("snapshot '" + path.string() + "': backbone fingerprint mismatch");
  }

  const auto& keys = file.get("pool.keys");
  const auto& prompts = file.get("pool.prompts");
  if (keys.shape.size() != 2 || prompts.shape.size() != 3 || prompts.shape[0] != keys.shape[0] ||
      prompts.shape[2] != keys.shape[1]) {
    throw ParseError("snapshot: malformed pool records");
  }
  const auto n_p = static_cast<Eigen::Index>(keys.shape[0]);
  const auto dim = static_cast<Eigen::Index>(keys.shape[1]);
  const auto len = static_cast<Eigen::Index>(prompts.shape[1]);
  s.pool.keys.resize(n_p, dim);
  for (Eigen::Index r = 0; r < n_p; ++r)
    for (Eigen::Index c = 0; c < dim; ++c) s.pool.keys(r, c) = keys.reals[static_cast<std::size_t>(r * dim + c)];
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n_p; ++i) {
    Matrix p(len, dim);
    for (Eigen::Index r = 0; r < len; ++r)
      for (Eigen::Index c = 0; c < dim; ++c) p(r, c) = prompts.reals[k++];
    s.pool.prompts.push_back(std::move(p));
  }
  s.pool.top_k = static_cast<int>(file.get("pool.top_k").ints.at(0));
  s.pool.validate();

  const auto& weight = file.get("head.weight");
  const auto& bias = file.get("head.bias");
  s.head.classes = file.get("head.classes").ints;
  const auto classes = static_cast<Eigen::Index>(s.head.classes.size());
  if (weight.shape.size() != 2 || static_cast<Eigen::Index>(weight.shape[1]) != classes ||
      static_cast<Eigen::Index>(bias.reals.size()) != classes) {
    throw ParseError("snapshot: malformed head records");
  }
  const auto hdim = static_cast<Eigen::Index>(weight.shape[0]);
  s.head.weight.resize(hdim, classes);
  for (Eigen::Index r = 0; r < hdim; ++r)
    for (Eigen::Index c = 0; c < classes; ++c)
      s.head.weight(r, c) = weight.reals[static_cast<std::size_t>(r * classes + c)];
  s.head.bias = Eigen::Map<const Vector>(bias.reals.data(), classes);
  if (file.contains("learner.trained_tasks")) s.trained_tasks = file.get("learner.trained_tasks").ints;
  return s;
}

}  // namespace aop
