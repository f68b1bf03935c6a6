#include "mobe/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mobe/errors.hpp"

namespace mobe {

namespace {

void check_experts(std::span<const Matrix> experts) {
  if (experts.empty()) throw ShapeError("baseline: no experts");
  for (const auto& w : experts) {
    if (w.rows() != experts.front().rows() || w.cols() != experts.front().cols()) {
      throw ShapeError("baseline: experts differ in shape");
    }
  }
}

void check_rank(std::size_t rank, const Matrix& shape) {
  const std::size_t limit = std::min(shape.rows(), shape.cols());
  if (rank < 1 || rank > limit) {
    throw ArgumentError("rank " + std::to_string(rank) + " outside [1, " + std::to_string(limit) + "]");
  }
}

void score(BaselineResult& result, std::span<const Matrix> experts) {
  const auto recon = materialize(result.projection);
  result.expert_errors.resize(experts.size());
  for (std::size_t i = 0; i < experts.size(); ++i) result.expert_errors[i] = frobenius_dist_sq(recon[i], experts[i]);
  result.squared_error = std::accumulate(result.expert_errors.begin(), result.expert_errors.end(), 0.0);
}

}  // namespace

BaselineResult svd_per_expert(std::span<const Matrix> experts, std::size_t rank) {
  check_experts(experts);
  check_rank(rank, experts.front());
  BaselineResult out;
  out.method = Method::kSvd;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    auto [left, right] = truncated_factors(svd(experts[i]), rank);
    out.projection.left.push_back(std::move(left));
    out.projection.right.push_back(std::move(right));
    out.projection.right_index.push_back(i);
  }
  const auto& w = experts.front();
  out.parameter_count = svd_parameter_count(experts.size(), w.rows(), w.cols(), rank);
  score(out, experts);
  return out;
}

std::vector<std::size_t> contiguous_grouping(std::size_t experts, std::size_t groups) {
  std::vector<std::size_t> out(experts);
  for (std::size_t i = 0; i < experts; ++i) out[i] = contiguous_group(i, experts, groups);
  return out;
}

BaselineResult molae_compress(std::span<const Matrix> experts, std::size_t latent_count, std::size_t rank,
                              const GroupingFn& grouping) {
  check_experts(experts);
  check_rank(rank, experts.front());
  const std::size_t n = experts.size();
  if (latent_count < 1 || latent_count > n) {
    throw ArgumentError("latent count " + std::to_string(latent_count) + " outside [1, " + std::to_string(n) + "]");
  }
  const auto groups = grouping(n, latent_count);
  if (groups.size() != n) throw ArgumentError("grouping returned the wrong number of assignments");

  BaselineResult out;
  out.method = Method::kMolae;
  out.projection.left.resize(n);
  out.projection.right_index = groups;
  const std::size_t p = experts.front().rows();

  for (std::size_t g = 0; g < latent_count; ++g) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (groups[i] >= latent_count) throw ArgumentError("grouping assigned an out-of-range group");
      if (groups[i] == g) members.push_back(i);
    }
    if (members.empty()) throw ArgumentError("group " + std::to_string(g) + " has no experts");

    std::vector<Matrix> blocks;
    for (auto i : members) blocks.push_back(experts[i]);
    const Matrix stacked = vstack(blocks);
    // rank <= min(p, d) <= min(stacked dims), so the truncation is always valid.
    auto [left, right] = truncated_factors(svd(stacked), rank);
    for (std::size_t k = 0; k < members.size(); ++k) {
      Matrix slice(p, rank);
      std::copy_n(left.data().begin() + k * p * rank, p * rank, slice.data().begin());
      out.projection.left[members[k]] = std::move(slice);
    }
    out.projection.right.push_back(std::move(right));
  }
  const auto& w = experts.front();
  out.parameter_count = molae_parameter_count(n, w.rows(), w.cols(), latent_count, rank);
  score(out, experts);
  return out;
}

BaselineResult d2moe_compress(std::span<const Matrix> experts, std::size_t delta_rank,
                              std::span<const double> weights) {
  check_experts(experts);
  check_rank(delta_rank, experts.front());
  const std::size_t n = experts.size();
  std::vector<double> w(n, 1.0);
  if (!weights.empty()) {
    if (weights.size() != n) throw ArgumentError("d2moe: expected " + std::to_string(n) + " expert weights");
    w.assign(weights.begin(), weights.end());
  }
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("d2moe: expert weights must be finite and non-negative");
    total += v;
  }
  if (!(total > 0.0)) throw ArgumentError("d2moe: expert weights must not all be zero");

  Matrix shared(experts.front().rows(), experts.front().cols());
  for (std::size_t i = 0; i < n; ++i) shared += experts[i] * (w[i] / total);

  BaselineResult out;
  out.method = Method::kD2moe;
  for (std::size_t i = 0; i < n; ++i) {
    auto [left, right] = truncated_factors(svd(experts[i] - shared), delta_rank);
    out.projection.left.push_back(std::move(left));
    out.projection.right.push_back(std::move(right));
    out.projection.right_index.push_back(i);
  }
  out.projection.shared = std::move(shared);
  const auto& e = experts.front();
  out.parameter_count = d2moe_parameter_count(n, e.rows(), e.cols(), delta_rank);
  score(out, experts);
  return out;
}

std::size_t svd_parameter_count(std::size_t n, std::size_t p, std::size_t d, std::size_t rank) {
  return n * rank * (p + d);
}

std::size_t molae_parameter_count(std::size_t n, std::size_t p, std::size_t d, std::size_t latent_count,
                                  std::size_t rank) {
  return n * p * rank + latent_count * rank * d;
}

std::size_t d2moe_parameter_count(std::size_t n, std::size_t p, std::size_t d, std::size_t rank) {
  return p * d + n * rank * (p + d);
}

std::size_t mobe_parameter_count(std::size_t n, std::size_t p, std::size_t d, std::size_t rank, std::size_t m) {
  return n * p * rank + m * rank * d;
}

std::size_t equal_budget_rank(Method method, std::size_t n, std::size_t p, std::size_t d, std::size_t budget,
                              std::size_t latent_count) {
  const std::size_t limit = std::min(p, d);
  for (std::size_t rank = 1; rank <= limit; ++rank) {
    std::size_t count = 0;
    switch (method) {
      case Method::kSvd: count = svd_parameter_count(n, p, d, rank); break;
      case Method::kMolae: count = molae_parameter_count(n, p, d, latent_count, rank); break;
      case Method::kD2moe: count = d2moe_parameter_count(n, p, d, rank); break;
      case Method::kMobe: throw ArgumentError("equal_budget_rank: MoBE is the reference, not a baseline");
    }
    if (count >= budget) return rank;
  }
  return limit;
}

BaselineConversion compress_baseline(const MoEModel& model, const BaselineConfig& config) {
  model.validate();
  if (config.method == Method::kMobe) throw ArgumentError("compress_baseline: MoBE is not a baseline");
  const auto& c = model.config;
  BaselineConversion out;
  out.model.config = c;
  out.model.spec = CompressionSpec{config.method, static_cast<std::uint32_t>(config.rank),
                                   config.method == Method::kMolae ? static_cast<std::uint32_t>(config.latent_count) : 0,
                                   1, Activation::kNone, false};
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    CompressedLayer compressed;
    for (auto type : kFactorizedTypes) {
      const auto& experts = layer.weights(type);
      BaselineResult result;
      switch (config.method) {
        case Method::kSvd: result = svd_per_expert(experts, config.rank); break;
        case Method::kMolae: result = molae_compress(experts, config.latent_count, config.rank); break;
        case Method::kD2moe: result = d2moe_compress(experts, config.rank, config.weights); break;
        case Method::kMobe: break;
      }
      compressed.projection(type) = result.projection;
      out.results.push_back({l, type, std::move(result)});
    }
    compressed.down = layer.down;
    compressed.router = layer.router;
    out.model.layers.push_back(std::move(compressed));
  }
  out.model.validate();
  return out;
}

}  // namespace mobe
