#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <vector>

#include "aop/core/random.hpp"
#include "aop/core/types.hpp"

namespace aop {

struct BackboneConfig {
  ImageShape image{};
  int patch_size = 4;
  int feature_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int mlp_dim = 128;
  /// Inputs are normalized as (x - pixel_mean) / pixel_std before patching.
  double pixel_mean = 0.5;
  double pixel_std = 0.25;
  double token_init_std = 0.02;
  std::uint64_t seed = 0;

  int patches_per_row() const { return image.width / patch_size; }
  int patches_per_col() const { return image.height / patch_size; }
  int num_patches() const { return patches_per_row() * patches_per_col(); }
  int patch_dim() const { return image.channels * patch_size * patch_size; }

  void validate() const {
    if (patch_size <= 0 || image.height % patch_size != 0 ||
        image.width % patch_size != 0) {
      throw ConfigError("patch size must evenly divide the image");
    }
    if (feature_dim <= 0 || num_layers <= 0 || num_heads <= 0 ||
        mlp_dim <= 0 || feature_dim % num_heads != 0) {
      throw ConfigError("feature_dim must be positive and divisible by num_heads");
    }
    if (image.channels <= 0) throw ConfigError("image needs at least one channel");
    if (!(pixel_std > 0.0)) throw ConfigError("pixel_std must be positive");
  }

  bool operator==(const BackboneConfig&) const = default;
};

namespace detail {

template <typename Scalar>
struct LayerNormTrace {
  MatrixX<Scalar> normalized;
  VectorX<Scalar> inv_std;
};

template <typename Scalar>
MatrixX<Scalar> layer_norm(const MatrixX<Scalar>& x, const VectorX<Scalar>& gain,
                           const VectorX<Scalar>& bias,
                           LayerNormTrace<Scalar>* trace) {
  constexpr Scalar kEps = Scalar(1e-5);
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  MatrixX<Scalar> normalized(n, d);
  VectorX<Scalar> inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Scalar mean = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = Scalar(1) / std::sqrt(var + kEps);
    normalized.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  MatrixX<Scalar> out =
      (normalized.array().rowwise() * gain.transpose().array()).rowwise() +
      bias.transpose().array();
  if (trace) {
    trace->normalized = std::move(normalized);
    trace->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename Scalar>
MatrixX<Scalar> layer_norm_backward(const MatrixX<Scalar>& grad_out,
                                    const VectorX<Scalar>& gain,
                                    const LayerNormTrace<Scalar>& trace) {
  const MatrixX<Scalar> g_hat =
      grad_out.array().rowwise() * gain.transpose().array();
  MatrixX<Scalar> grad_in(grad_out.rows(), grad_out.cols());
  for (Eigen::Index r = 0; r < grad_out.rows(); ++r) {
    const Scalar mean_g = g_hat.row(r).mean();
    const Scalar mean_gx =
        (g_hat.row(r).array() * trace.normalized.row(r).array()).mean();
    grad_in.row(r) = trace.inv_std(r) *
                     (g_hat.row(r).array() - mean_g -
                      trace.normalized.row(r).array() * mean_gx);
  }
  return grad_in;
}

template <typename Scalar>
Scalar gelu(Scalar u) {
  constexpr Scalar c = Scalar(0.7978845608028654);
  return Scalar(0.5) * u * (Scalar(1) + std::tanh(c * (u + Scalar(0.044715) * u * u * u)));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar u) {
  constexpr Scalar c = Scalar(0.7978845608028654);
  const Scalar t = std::tanh(c * (u + Scalar(0.044715) * u * u * u));
  return Scalar(0.5) * (Scalar(1) + t) +
         Scalar(0.5) * u * (Scalar(1) - t * t) * c *
             (Scalar(1) + Scalar(3 * 0.044715) * u * u);
}

template <typename Scalar>
void softmax_rows(MatrixX<Scalar>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

}  // namespace detail

/// Frozen pre-LN transformer encoder over image patches.
///
/// Token layout: row 0 is the class token, followed by any prompt tokens
/// (no positional term), followed by the patch embeddings. The returned
/// feature is the final-norm class-token row. Weights are drawn once from
/// the configured seed and never change afterwards.
template <typename Scalar>
class Backbone {
 public:
  using Mat = MatrixX<Scalar>;
  using Vec = VectorX<Scalar>;

  struct Layer {
    Vec ln1_gain, ln1_bias;
    Mat w_query, w_key, w_value, w_out;
    Vec b_query, b_key, b_value, b_out;
    Vec ln2_gain, ln2_bias;
    Mat w_hidden, w_proj;
    Vec b_hidden, b_proj;
  };

  /// Every weight of the encoder.
  struct Parameters {
    Mat patch_weight;  // patch_dim x feature_dim
    Vec patch_bias;
    Vec cls_token;
    Mat position;      // (1 + num_patches) x feature_dim
    std::vector<Layer> layers;
    Vec final_gain, final_bias;

    /// Applies f(tensor) to every parameter tensor in a fixed order.
    template <typename F>
    void for_each(F&& f) {
      f(patch_weight); f(patch_bias); f(cls_token); f(position);
      for (auto& l : layers) {
        f(l.ln1_gain); f(l.ln1_bias);
        f(l.w_query); f(l.w_key); f(l.w_value); f(l.w_out);
        f(l.b_query); f(l.b_key); f(l.b_value); f(l.b_out);
        f(l.ln2_gain); f(l.ln2_bias);
        f(l.w_hidden); f(l.w_proj); f(l.b_hidden); f(l.b_proj);
      }
      f(final_gain); f(final_bias);
    }
    template <typename F>
    void for_each(F&& f) const {
      const_cast<Parameters*>(this)->for_each([&f](const auto& t) { f(t); });
    }

    /// Flat views of every tensor, in for_each order.
    std::vector<Eigen::Map<Vec>> views() {
      std::vector<Eigen::Map<Vec>> v;
      for_each([&v](auto& t) { v.emplace_back(t.data(), t.size()); });
      return v;
    }
    std::vector<Eigen::Map<const Vec>> views() const {
      std::vector<Eigen::Map<const Vec>> v;
      for_each([&v](const auto& t) { v.emplace_back(t.data(), t.size()); });
      return v;
    }

    Parameters zeros_like() const {
      Parameters z = *this;
      z.for_each([](auto& t) { t.setZero(); });
      return z;
    }
  };

  struct LayerTrace {
    Mat input;
    detail::LayerNormTrace<Scalar> ln1;
    Mat normed1, query, key, value;
    std::vector<Mat> attention;  // per head, rows sum to one
    Mat mixed;                   // concatenated head outputs before w_out
    Mat residual;                // input + attention block
    detail::LayerNormTrace<Scalar> ln2;
    Mat normed2, pre_activation, activation;
  };

  /// Everything backward() needs from one forward pass.
  struct Trace {
    Eigen::Index prompt_tokens = 0;
    Mat patches;  // normalized patch matrix, num_patches x patch_dim
    std::vector<LayerTrace> layers;
    detail::LayerNormTrace<Scalar> final_ln;
  };

  struct InputGradients {
    Mat prompts;  // prompt_tokens x feature_dim
    Vec image;    // same layout as the input image
  };

  explicit Backbone(BackboneConfig config) : config_(std::move(config)) {
    config_.validate();
    initialize();
    round_to_float();
  }

  /// Adopts externally produced weights (pre-training, snapshots).
  Backbone(BackboneConfig config, Parameters params) : config_(std::move(config)) {
    config_.validate();
    initialize();
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    params_.for_each([&shapes](const auto& t) { shapes.emplace_back(t.rows(), t.cols()); });
    std::size_t i = 0;
    bool ok = params.layers.size() == params_.layers.size();
    if (ok) {
      params.for_each([&](const auto& t) {
        ok = ok && i < shapes.size() && shapes[i] == std::make_pair(t.rows(), t.cols()) && t.allFinite();
        ++i;
      });
    }
    if (!ok || i != shapes.size()) throw InputError("backbone parameters do not match the configuration");
    params_ = std::move(params);
    round_to_float();
  }

  const Parameters& parameters() const { return params_; }

  const BackboneConfig& config() const { return config_; }
  int feature_dim() const { return config_.feature_dim; }
  const ImageShape& image_shape() const { return config_.image; }

  /// Class-token feature of the prompt-free pass.
  Vec query(const Vec& image) const { return forward(image, Mat(0, feature_dim()), nullptr); }

  /// Row i is query(images.row(i)).
  Mat queries(const Mat& images) const {
    Mat out(images.rows(), feature_dim());
    for (Eigen::Index i = 0; i < images.rows(); ++i) out.row(i) = query(images.row(i).transpose()).transpose();
    return out;
  }

  Vec forward(const Vec& image, const Mat& prompt_tokens, Trace* trace) const {
    if (image.size() != config_.image.size() || !image.allFinite()) {
      throw InputError("image does not match backbone shape " + config_.image.to_string() +
                       " or has non-finite values");
    }
    if (prompt_tokens.rows() > 0 && prompt_tokens.cols() != feature_dim()) {
      throw InputError("prompt tokens must have feature_dim columns");
    }
    const Eigen::Index d = feature_dim();
    const Eigen::Index n_prompt = prompt_tokens.rows();
    const Eigen::Index n_patch = config_.num_patches();
    const Eigen::Index n_tok = 1 + n_prompt + n_patch;

    Mat patches = patchify(image);
    Mat tokens(n_tok, d);
    tokens.row(0) = (params_.cls_token + params_.position.row(0).transpose()).transpose();
    if (n_prompt > 0) tokens.middleRows(1, n_prompt) = prompt_tokens;
    tokens.bottomRows(n_patch) =
        ((patches * params_.patch_weight).rowwise() + params_.patch_bias.transpose()) +
        params_.position.bottomRows(n_patch);

    if (trace) {
      trace->prompt_tokens = n_prompt;
      trace->patches = patches;
      trace->layers.assign(params_.layers.size(), LayerTrace{});
    }
    for (std::size_t l = 0; l < params_.layers.size(); ++l) {
      tokens = layer_forward(params_.layers[l], tokens, trace ? &trace->layers[l] : nullptr);
    }
    // Only the class-token row is read out, so the final norm runs on it alone.
    Mat cls_row = tokens.topRows(1);
    Mat out = detail::layer_norm<Scalar>(cls_row, params_.final_gain, params_.final_bias,
                                         trace ? &trace->final_ln : nullptr);
    return out.row(0).transpose();
  }

  /// Back-propagates d(loss)/d(feature) to the prompt tokens and the raw image.
  InputGradients backward(const Trace& trace, const Vec& grad_feature) const {
    const Eigen::Index d = feature_dim();
    Mat grad_cls = detail::layer_norm_backward<Scalar>(grad_feature.transpose(),
                                                       params_.final_gain, trace.final_ln);
    const Eigen::Index n_tok = trace.layers.front().input.rows();
    Mat grad = Mat::Zero(n_tok, d);
    grad.row(0) = grad_cls.row(0);
    for (std::size_t l = params_.layers.size(); l-- > 0;) {
      grad = layer_backward(params_.layers[l], trace.layers[l], grad);
    }

    InputGradients out;
    const Eigen::Index n_prompt = trace.prompt_tokens;
    const Eigen::Index n_patch = config_.num_patches();
    out.prompts = grad.middleRows(1, n_prompt);
    const Mat grad_patches = grad.bottomRows(n_patch) * params_.patch_weight.transpose();
    out.image = unpatchify(grad_patches) / Scalar(config_.pixel_std);
    return out;
  }

  /// Gradient of the loss with respect to every weight, for pre-training.
  Parameters parameter_gradients(const Trace& trace, const Vec& grad_feature) const {
    Parameters g = params_.zeros_like();
    const Eigen::Index d = feature_dim();
    const Mat grad_row = grad_feature.transpose();
    g.final_gain = grad_row.cwiseProduct(trace.final_ln.normalized).row(0).transpose();
    g.final_bias = grad_feature;
    Mat grad_cls = detail::layer_norm_backward<Scalar>(grad_row, params_.final_gain, trace.final_ln);
    const Eigen::Index n_tok = trace.layers.front().input.rows();
    Mat grad = Mat::Zero(n_tok, d);
    grad.row(0) = grad_cls.row(0);
    for (std::size_t l = params_.layers.size(); l-- > 0;) {
      grad = layer_backward(params_.layers[l], trace.layers[l], grad, &g.layers[l]);
    }
    const Eigen::Index n_patch = config_.num_patches();
    g.cls_token = grad.row(0).transpose();
    g.position.row(0) = grad.row(0);
    g.position.bottomRows(n_patch) = grad.bottomRows(n_patch);
    g.patch_weight = trace.patches.transpose() * grad.bottomRows(n_patch);
    g.patch_bias = grad.bottomRows(n_patch).colwise().sum().transpose();
    return g;
  }

  /// Order-sensitive hash over every weight; equal before and after any
  /// training run because nothing here is trainable.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const auto& m) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
      const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(Scalar);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
      }
    };
    mix(params_.patch_weight); mix(params_.patch_bias); mix(params_.cls_token); mix(params_.position);
    for (const auto& layer : params_.layers) {
      mix(layer.ln1_gain); mix(layer.ln1_bias);
      mix(layer.w_query); mix(layer.w_key); mix(layer.w_value); mix(layer.w_out);
      mix(layer.b_query); mix(layer.b_key); mix(layer.b_value); mix(layer.b_out);
      mix(layer.ln2_gain); mix(layer.ln2_bias);
      mix(layer.w_hidden); mix(layer.w_proj); mix(layer.b_hidden); mix(layer.b_proj);
    }
    mix(params_.final_gain); mix(params_.final_bias);
    return h;
  }

 private:
  // Weights are kept float32-representable so snapshots store them exactly.
  void round_to_float() {
    params_.for_each([](auto& t) { t = t.unaryExpr([](Scalar v) { return Scalar(static_cast<float>(v)); }); });
  }

  void initialize() {
    Rng rng(derive_seed(config_.seed, "backbone"));
    const int d = config_.feature_dim;
    const int m = config_.mlp_dim;
    auto gaussian = [&rng](Eigen::Index rows, Eigen::Index cols, double stddev) {
      Mat w(rows, cols);
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
          w(i, j) = Scalar(stddev * standard_normal(rng));
      return w;
    };
    params_.patch_weight = gaussian(config_.patch_dim(), d, 1.0 / std::sqrt(double(config_.patch_dim())));
    params_.patch_bias = Vec::Zero(d);
    params_.cls_token = gaussian(d, 1, config_.token_init_std);
    params_.position = gaussian(1 + config_.num_patches(), d, config_.token_init_std);
    params_.layers.resize(static_cast<std::size_t>(config_.num_layers));
    const double attn_std = 1.0 / std::sqrt(double(d));
    for (auto& layer : params_.layers) {
      layer.ln1_gain = Vec::Ones(d);
      layer.ln1_bias = Vec::Zero(d);
      layer.w_query = gaussian(d, d, attn_std);
      layer.w_key = gaussian(d, d, attn_std);
      layer.w_value = gaussian(d, d, attn_std);
      layer.w_out = gaussian(d, d, attn_std);
      layer.b_query = Vec::Zero(d);
      layer.b_key = Vec::Zero(d);
      layer.b_value = Vec::Zero(d);
      layer.b_out = Vec::Zero(d);
      layer.ln2_gain = Vec::Ones(d);
      layer.ln2_bias = Vec::Zero(d);
      layer.w_hidden = gaussian(d, m, 1.0 / std::sqrt(double(d)));
      layer.b_hidden = Vec::Zero(m);
      layer.w_proj = gaussian(m, d, 1.0 / std::sqrt(double(m)));
      layer.b_proj = Vec::Zero(d);
    }
    params_.final_gain = Vec::Ones(d);
    params_.final_bias = Vec::Zero(d);
  }

  Mat patchify(const Vec& image) const {
    const int p = config_.patch_size;
    const int c_count = config_.image.channels;
    const int h = config_.image.height;
    const int w = config_.image.width;
    const int per_row = config_.patches_per_row();
    Mat patches(config_.num_patches(), config_.patch_dim());
    const Scalar mean = Scalar(config_.pixel_mean);
    const Scalar inv_std = Scalar(1.0 / config_.pixel_std);
    for (int py = 0; py < config_.patches_per_col(); ++py) {
      for (int px = 0; px < per_row; ++px) {
        const int row = py * per_row + px;
        int col = 0;
        for (int c = 0; c < c_count; ++c)
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) {
              const Eigen::Index idx =
                  (static_cast<Eigen::Index>(c) * h + py * p + dy) * w + px * p + dx;
              patches(row, col++) = (image(idx) - mean) * inv_std;
            }
      }
    }
    return patches;
  }

  Vec unpatchify(const Mat& patches) const {
    const int p = config_.patch_size;
    const int c_count = config_.image.channels;
    const int h = config_.image.height;
    const int w = config_.image.width;
    const int per_row = config_.patches_per_row();
    Vec image(config_.image.size());
    for (int py = 0; py < config_.patches_per_col(); ++py) {
      for (int px = 0; px < per_row; ++px) {
        const int row = py * per_row + px;
        int col = 0;
        for (int c = 0; c < c_count; ++c)
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) {
              const Eigen::Index idx =
                  (static_cast<Eigen::Index>(c) * h + py * p + dy) * w + px * p + dx;
              image(idx) = patches(row, col++);
            }
      }
    }
    return image;
  }

  Mat layer_forward(const Layer& layer, const Mat& input, LayerTrace* t) const {
    const Eigen::Index n = input.rows();
    const int heads = config_.num_heads;
    const Eigen::Index dh = feature_dim() / heads;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));

    detail::LayerNormTrace<Scalar> ln1;
    Mat normed1 = detail::layer_norm<Scalar>(input, layer.ln1_gain, layer.ln1_bias, t ? &ln1 : nullptr);
    Mat query = (normed1 * layer.w_query).rowwise() + layer.b_query.transpose();
    Mat key = (normed1 * layer.w_key).rowwise() + layer.b_key.transpose();
    Mat value = (normed1 * layer.w_value).rowwise() + layer.b_value.transpose();

    Mat mixed(n, feature_dim());
    std::vector<Mat> attention;
    if (t) attention.reserve(static_cast<std::size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      Mat scores = query.middleCols(hd * dh, dh) * key.middleCols(hd * dh, dh).transpose() * scale;
      detail::softmax_rows<Scalar>(scores);
      mixed.middleCols(hd * dh, dh) = scores * value.middleCols(hd * dh, dh);
      if (t) attention.push_back(std::move(scores));
    }
    Mat residual = input + ((mixed * layer.w_out).rowwise() + layer.b_out.transpose());

    detail::LayerNormTrace<Scalar> ln2;
    Mat normed2 = detail::layer_norm<Scalar>(residual, layer.ln2_gain, layer.ln2_bias, t ? &ln2 : nullptr);
    Mat pre = (normed2 * layer.w_hidden).rowwise() + layer.b_hidden.transpose();
    Mat act = pre.unaryExpr([](Scalar u) { return detail::gelu(u); });
    Mat output = residual + ((act * layer.w_proj).rowwise() + layer.b_proj.transpose());

    if (t) {
      t->input = input;
      t->ln1 = std::move(ln1);
      t->normed1 = std::move(normed1);
      t->query = std::move(query);
      t->key = std::move(key);
      t->value = std::move(value);
      t->attention = std::move(attention);
      t->mixed = std::move(mixed);
      t->residual = std::move(residual);
      t->ln2 = std::move(ln2);
      t->normed2 = std::move(normed2);
      t->pre_activation = std::move(pre);
      t->activation = std::move(act);
    }
    return output;
  }

  Mat layer_backward(const Layer& layer, const LayerTrace& t, const Mat& grad_out, Layer* g = nullptr) const {
    const int heads = config_.num_heads;
    const Eigen::Index dh = feature_dim() / heads;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));

    // MLP block.
    const Mat grad_act = grad_out * layer.w_proj.transpose();
    const Mat grad_pre = grad_act.cwiseProduct(
        t.pre_activation.unaryExpr([](Scalar u) { return detail::gelu_derivative(u); }));
    const Mat grad_normed2 = grad_pre * layer.w_hidden.transpose();
    Mat grad_residual = grad_out +
        detail::layer_norm_backward<Scalar>(grad_normed2, layer.ln2_gain, t.ln2);
    if (g) {
      g->w_proj = t.activation.transpose() * grad_out;
      g->b_proj = grad_out.colwise().sum().transpose();
      g->w_hidden = t.normed2.transpose() * grad_pre;
      g->b_hidden = grad_pre.colwise().sum().transpose();
      g->ln2_gain = grad_normed2.cwiseProduct(t.ln2.normalized).colwise().sum().transpose();
      g->ln2_bias = grad_normed2.colwise().sum().transpose();
    }

    // Attention block.
    const Mat grad_mixed = grad_residual * layer.w_out.transpose();
    Mat grad_query(t.query.rows(), t.query.cols());
    Mat grad_key(t.key.rows(), t.key.cols());
    Mat grad_value(t.value.rows(), t.value.cols());
    for (int hd = 0; hd < heads; ++hd) {
      const Mat& probs = t.attention[static_cast<std::size_t>(hd)];
      const auto g_head = grad_mixed.middleCols(hd * dh, dh);
      const Mat grad_probs = g_head * t.value.middleCols(hd * dh, dh).transpose();
      grad_value.middleCols(hd * dh, dh) = probs.transpose() * g_head;
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_dot =
          (grad_probs.cwiseProduct(probs)).rowwise().sum();
      const Mat grad_scores =
          probs.cwiseProduct(grad_probs - row_dot.replicate(1, probs.cols())) * scale;
      grad_query.middleCols(hd * dh, dh) = grad_scores * t.key.middleCols(hd * dh, dh);
      grad_key.middleCols(hd * dh, dh) = grad_scores.transpose() * t.query.middleCols(hd * dh, dh);
    }
    const Mat grad_normed1 = grad_query * layer.w_query.transpose() +
                             grad_key * layer.w_key.transpose() +
                             grad_value * layer.w_value.transpose();
    if (g) {
      g->w_out = t.mixed.transpose() * grad_residual;
      g->b_out = grad_residual.colwise().sum().transpose();
      g->w_query = t.normed1.transpose() * grad_query;
      g->w_key = t.normed1.transpose() * grad_key;
      g->w_value = t.normed1.transpose() * grad_value;
      g->b_query = grad_query.colwise().sum().transpose();
      g->b_key = grad_key.colwise().sum().transpose();
      g->b_value = grad_value.colwise().sum().transpose();
      g->ln1_gain = grad_normed1.cwiseProduct(t.ln1.normalized).colwise().sum().transpose();
      g->ln1_bias = grad_normed1.colwise().sum().transpose();
    }
    return grad_residual + detail::layer_norm_backward<Scalar>(grad_normed1, layer.ln1_gain, t.ln1);
  }

  BackboneConfig config_;
  Parameters params_;
};

}  // namespace aop
