#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "aop/core/errors.hpp"

namespace aop {

/// Working precision of everything above the templated core.
using Real = double;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<Real>;
using Vector = VectorX<Real>;

/// Images are stored flat in channel-major (C, H, W) order.
using Image = Vector;

using ClassId = std::int64_t;

struct ImageShape {
  int channels = 3;
  int height = 16;
  int width = 16;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(channels) * height * width;
  }
  bool operator==(const ImageShape&) const = default;

  std::string to_string() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }
};

inline void check_image(const ImageShape& shape, const Image& x) {
  if (x.size() != shape.size()) {
    throw InputError("image has " + std::to_string(x.size()) +
                     " values, expected " + std::to_string(shape.size()) +
                     " for shape " + shape.to_string());
  }
  if (!x.allFinite()) throw InputError("image contains non-finite values");
}

enum class LossMode { softmax_ce, sigmoid_bce };

inline std::string to_string(LossMode mode) {
  return mode == LossMode::softmax_ce ? "ce" : "bce";
}

LossMode parse_loss_mode(const std::string& text);

}  // namespace aop
