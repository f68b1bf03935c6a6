#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "mobe/model.hpp"

namespace mobe {

enum class SyntheticMode { kGaussian, kPlanted };

SyntheticMode parse_synthetic_mode(std::string_view name);

struct SyntheticOptions {
  SyntheticMode mode = SyntheticMode::kGaussian;
  std::uint64_t seed = 0;
  /// Entry std of every tensor in gaussian mode.
  double weight_std = 1.0;

  // Planted mode: gate and up are built exactly as A^i f(Σ_j α^{i,j} B^j)
  // with A ~ N(0, 1/r), B ~ N(0, basis_std²) and α ~ Dirichlet(1).
  std::uint32_t basis_count = 0;
  std::uint32_t rank = 0;
  std::uint32_t groups = 1;
  Activation activation = Activation::kSilu;
  double basis_std = 1.0;
};

struct SyntheticModel {
  MoEModel model;
  std::optional<CompressedModel> truth;  // planted mode only
};

/// Deterministic for a fixed seed. Planted factors are rounded to f32 before
/// W is formed, so the stored truth reproduces W up to f32 storage of W itself.
SyntheticModel generate_synthetic(const MoEConfig& config, const SyntheticOptions& options);

}  // namespace mobe
