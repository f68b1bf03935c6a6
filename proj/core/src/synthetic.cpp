#include "mobe/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mobe/basis.hpp"
#include "mobe/errors.hpp"

namespace mobe {

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : engine_(seed) {}

  Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, bool round_to_f32 = false) {
    Matrix m(rows, cols);
    for (double& v : m.data()) {
      v = stddev * normal_(engine_);
      if (round_to_f32) v = static_cast<float>(v);
    }
    return m;
  }

  /// Symmetric Dirichlet(1): normalized unit exponentials.
  std::vector<double> dirichlet(std::size_t k) {
    std::vector<double> w(k);
    double total = 0.0;
    for (double& v : w) {
      v = exponential_(engine_);
      total += v;
    }
    for (double& v : w) v /= total;
    return w;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
};

BasisProjection planted_projection(Sampler& rng, const MoEConfig& c, const SyntheticOptions& o) {
  const std::size_t n = c.experts, d = c.hidden, p = c.intermediate;
  const std::size_t per = o.basis_count / o.groups;
  BasisProjection proj;
  proj.groups = o.groups;
  proj.activation = o.activation;
  for (std::size_t i = 0; i < n; ++i) proj.transforms.push_back(rng.gaussian(p, o.rank, 1.0 / std::sqrt(o.rank), true));
  for (std::size_t j = 0; j < o.basis_count; ++j) proj.bases.push_back(rng.gaussian(o.rank, d, o.basis_std, true));
  proj.logits = Matrix(n, per);
  for (std::size_t i = 0; i < n; ++i) {
    const auto alpha = rng.dirichlet(per);
    for (std::size_t j = 0; j < per; ++j) {
      // Dirichlet draws underflow only with vanishing probability; clamp keeps log finite.
      proj.logits(i, j) = static_cast<float>(std::log(std::max(alpha[j], 1e-30)));
    }
  }
  return proj;
}

}  // namespace

SyntheticMode parse_synthetic_mode(std::string_view name) {
  if (name == "gaussian") return SyntheticMode::kGaussian;
  if (name == "planted") return SyntheticMode::kPlanted;
  throw ArgumentError("unknown synthetic mode '" + std::string(name) + "' (expected gaussian or planted)");
}

SyntheticModel generate_synthetic(const MoEConfig& config, const SyntheticOptions& options) {
  config.validate();
  const std::size_t n = config.experts, d = config.hidden, p = config.intermediate;
  Sampler rng(options.seed);
  SyntheticModel out;
  out.model.config = config;

  if (options.mode == SyntheticMode::kGaussian) {
    if (!(options.weight_std > 0.0)) throw ArgumentError("gaussian weight std must be positive");
    for (std::uint32_t l = 0; l < config.layers; ++l) {
      MoELayer layer;
      layer.router = rng.gaussian(n, d, options.weight_std);
      for (std::size_t i = 0; i < n; ++i) {
        layer.gate.push_back(rng.gaussian(p, d, options.weight_std));
        layer.up.push_back(rng.gaussian(p, d, options.weight_std));
        layer.down.push_back(rng.gaussian(d, p, options.weight_std));
      }
      out.model.layers.push_back(std::move(layer));
    }
    return out;
  }

  if (options.basis_count >= n) {
    throw ArgumentError("planted basis count m = " + std::to_string(options.basis_count) +
                        " must be smaller than the expert count n = " + std::to_string(n));
  }
  if (options.groups < 1 || options.basis_count < options.groups || options.basis_count % options.groups != 0 ||
      options.groups > n) {
    throw ArgumentError("planted basis count must be a positive multiple of the group count");
  }
  if (options.rank < 1 || options.rank > std::min(p, d)) {
    throw ArgumentError("planted rank must lie in [1, min(p, d)]");
  }

  CompressedModel truth;
  truth.config = config;
  truth.spec = CompressionSpec{Method::kMobe, options.rank, options.basis_count, options.groups, options.activation,
                               false};
  for (std::uint32_t l = 0; l < config.layers; ++l) {
    MoELayer layer;
    CompressedLayer truth_layer;
    for (auto type : kFactorizedTypes) {
      BasisProjection proj = planted_projection(rng, config, options);
      auto& weights = layer.weights(type);
      for (std::size_t i = 0; i < n; ++i) weights.push_back(reconstruct_expert(proj, i));
      truth_layer.projection(type) = std::move(proj);
    }
    layer.router = rng.gaussian(n, d, 1.0 / std::sqrt(double(d)), true);
    for (std::size_t i = 0; i < n; ++i) layer.down.push_back(rng.gaussian(d, p, 1.0 / std::sqrt(double(p)), true));
    truth_layer.router = layer.router;
    truth_layer.down = layer.down;
    out.model.layers.push_back(std::move(layer));
    truth.layers.push_back(std::move(truth_layer));
  }
  out.truth = std::move(truth);
  return out;
}

}  // namespace mobe
