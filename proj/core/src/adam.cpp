#include "mobe/adam.hpp"

#include <cmath>
#include <string>

#include "mobe/errors.hpp"

namespace mobe {

Adam::Adam(std::size_t parameter_count, AdamConfig config)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (!(config_.lr > 0.0)) throw ArgumentError("adam: learning rate must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ArgumentError("adam: betas must lie in [0, 1)");
  }
}

void Adam::step(std::span<const Block> blocks, double lr_scale) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, double(t_));
  const double bias2 = 1.0 - std::pow(b2, double(t_));
  const double step_size = lr_scale * config_.lr / bias1;
  const double inv_sqrt_bias2 = 1.0 / std::sqrt(bias2);

  std::size_t offset = 0;
  for (const auto& block : blocks) {
    if (block.params.size() != block.grads.size() || offset + block.params.size() > m_.size()) {
      throw ShapeError("adam: parameter blocks do not match the optimizer state");
    }
    for (std::size_t i = 0; i < block.params.size(); ++i) {
      const double g = block.grads[i];
      double& m = m_[offset + i];
      double& v = v_[offset + i];
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g * g;
      block.params[i] -= step_size * m / (std::sqrt(v) * inv_sqrt_bias2 + config_.eps);
    }
    offset += block.params.size();
  }
  if (offset != m_.size()) throw ShapeError("adam: parameter blocks cover " + std::to_string(offset) + " of " +
                                            std::to_string(m_.size()) + " entries");
}

}  // namespace mobe
