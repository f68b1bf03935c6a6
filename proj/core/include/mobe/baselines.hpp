#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mobe/model.hpp"

namespace mobe {

/// Result of one low-rank baseline on one matrix type of one layer.
struct BaselineResult {
  Method method = Method::kSvd;
  LowRankProjection projection;
  std::vector<double> expert_errors;  // ‖W^i - Ŵ^i‖², recomputed from the factors
  double squared_error = 0.0;         // Σ expert_errors
  std::size_t parameter_count = 0;
};

/// Truncated SVD of every expert independently.
BaselineResult svd_per_expert(std::span<const Matrix> experts, std::size_t rank);

/// Maps n experts to `groups` group indices.
using GroupingFn = std::function<std::vector<std::size_t>(std::size_t experts, std::size_t groups)>;

std::vector<std::size_t> contiguous_grouping(std::size_t experts, std::size_t groups);

/// Shared-latent baseline: per group, the top-`rank` right singular vectors of
/// the vertically stacked members form the shared latent; each member keeps its
/// slice of U·S as its transform.
BaselineResult molae_compress(std::span<const Matrix> experts, std::size_t latent_count, std::size_t rank,
                              const GroupingFn& grouping = contiguous_grouping);

/// Shared-mean baseline: shared = Σ w_i W^i / Σ w_i kept dense, each delta
/// W^i - shared truncated to `delta_rank`. Empty weights mean uniform.
BaselineResult d2moe_compress(std::span<const Matrix> experts, std::size_t delta_rank,
                              std::span<const double> weights = {});

/// Parameter counts per matrix type per layer.
std::size_t svd_parameter_count(std::size_t n, std::size_t p, std::size_t d, std::size_t rank);
std::size_t molae_parameter_count(std::size_t n, std::size_t p, std::size_t d, std::size_t latent_count,
                                  std::size_t rank);
std::size_t d2moe_parameter_count(std::size_t n, std::size_t p, std::size_t d, std::size_t rank);
/// n·p·r + m·r·d (transforms and bases of one MoBE projection).
std::size_t mobe_parameter_count(std::size_t n, std::size_t p, std::size_t d, std::size_t rank, std::size_t m);

/// Smallest baseline rank whose parameter count is >= `budget`, capped at
/// min(p, d). `latent_count` is only used for MoLAE.
std::size_t equal_budget_rank(Method method, std::size_t n, std::size_t p, std::size_t d, std::size_t budget,
                              std::size_t latent_count = 0);

struct BaselineConfig {
  Method method = Method::kSvd;
  std::size_t rank = 1;
  std::size_t latent_count = 0;  // MoLAE only
  std::vector<double> weights;   // D²-MoE only; empty means uniform
};

struct BaselineLayerResult {
  std::size_t layer = 0;
  MatrixType type = MatrixType::kGate;
  BaselineResult result;
};

struct BaselineConversion {
  CompressedModel model;
  std::vector<BaselineLayerResult> results;  // layer-major, gate before up
};

/// Applies one baseline to gate and up of every layer with contiguous MoLAE
/// grouping (the only grouping the container records); down matrices and
/// router are copied.
BaselineConversion compress_baseline(const MoEModel& model, const BaselineConfig& config);

}  // namespace mobe
