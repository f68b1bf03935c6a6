#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mobe {

struct AdamConfig {
  double lr = 0.07;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed collection of parameter blocks. Blocks
/// must be passed in the same order and with the same sizes on every step.
class Adam {
 public:
  Adam(std::size_t parameter_count, AdamConfig config);

  struct Block {
    std::span<double> params;
    std::span<const double> grads;
  };

  /// `lr_scale` multiplies the configured learning rate for this step only.
  void step(std::span<const Block> blocks, double lr_scale = 1.0);

  std::size_t steps_taken() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace mobe
