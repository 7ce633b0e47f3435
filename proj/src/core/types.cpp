#include "aop/core/types.hpp"

namespace aop {

LossMode parse_loss_mode(const std::string& text) {
  if (text == "ce" || text == "softmax-ce") return LossMode::softmax_ce;
  if (text == "bce" || text == "sigmoid-bce") return LossMode::sigmoid_bce;
  throw ConfigError("unknown loss mode '" + text + "' (expected ce or bce)");
}

}  // namespace aop
