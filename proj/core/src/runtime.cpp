#include "mobe/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "mobe/basis.hpp"
#include "mobe/errors.hpp"

namespace mobe {

namespace {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace

RoutingDecision route(const Matrix& router, std::span<const double> x, std::size_t k, bool renormalize) {
  const std::size_t n = router.rows();
  if (k < 1 || k > n) throw ArgumentError("route: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  const auto probs = softmax(matvec(router, x));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(), [&](std::size_t a, std::size_t b) {
    return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
  });

  RoutingDecision out;
  out.experts.assign(order.begin(), order.begin() + std::ptrdiff_t(k));
  for (auto i : out.experts) out.gates.push_back(probs[i]);
  if (renormalize) {
    const double total = std::accumulate(out.gates.begin(), out.gates.end(), 0.0);
    for (double& g : out.gates) g /= total;
  }
  return out;
}

std::vector<double> expert_forward(const Matrix& gate, const Matrix& up, const Matrix& down, std::span<const double> x) {
  if (gate.rows() != up.rows() || gate.cols() != up.cols() || down.cols() != gate.rows() || down.rows() != gate.cols()) {
    throw ShapeError("expert_forward: gate " + gate.shape_string() + ", up " + up.shape_string() + ", down " +
                     down.shape_string() + " are inconsistent");
  }
  auto g = matvec(gate, x);
  const auto u = matvec(up, x);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = u[j] * silu(g[j]);
  return matvec(down, g);
}

std::vector<double> LayerRuntime::Projection::apply(std::span<const double> x) const {
  std::vector<double> y = inner ? matvec(outer, matvec(*inner, x)) : matvec(outer, x);
  if (dense) {
    const auto extra = matvec(*dense, x);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += extra[j];
  }
  return y;
}

LayerRuntime::LayerRuntime(const MoEModel& model, std::size_t layer)
    : down_(model.layers.at(layer).down), router_(model.layers.at(layer).router), top_k_(model.config.top_k) {
  const auto& l = model.layers[layer];
  for (std::size_t i = 0; i < l.gate.size(); ++i) {
    gate_.push_back({l.gate[i], std::nullopt, std::nullopt});
    up_.push_back({l.up[i], std::nullopt, std::nullopt});
  }
}

LayerRuntime::LayerRuntime(const CompressedModel& model, std::size_t layer, bool materialize_weights)
    : down_(model.layers.at(layer).down), router_(model.layers.at(layer).router), top_k_(model.config.top_k) {
  const auto& l = model.layers[layer];
  for (auto type : kFactorizedTypes) {
    auto& ops = type == MatrixType::kGate ? gate_ : up_;
    const auto& proj = l.projection(type);
    if (materialize_weights) {
      for (auto& w : materialize(proj)) ops.push_back({std::move(w), std::nullopt, std::nullopt});
      continue;
    }
    if (const auto* basis = std::get_if<BasisProjection>(&proj)) {
      for (std::size_t i = 0; i < basis->transforms.size(); ++i) {
        ops.push_back({basis->transforms[i], expert_right_factor(*basis, i), basis->mu});
      }
    } else {
      const auto& lr = std::get<LowRankProjection>(proj);
      for (std::size_t i = 0; i < lr.left.size(); ++i) {
        ops.push_back({lr.left[i], lr.right.at(lr.right_index.at(i)), lr.shared});
      }
    }
  }
}

RoutingDecision LayerRuntime::route_token(std::span<const double> x, const ForwardOptions& options) const {
  const std::size_t k = options.k_override.value_or(top_k_);
  if (k > top_k_) {
    throw ArgumentError("k override " + std::to_string(k) + " exceeds the configured top-k " + std::to_string(top_k_));
  }
  return route(router_, x, k, options.renormalize);
}

std::vector<double> LayerRuntime::expert(std::size_t i, std::span<const double> x) const {
  auto g = gate_[i].apply(x);
  const auto u = up_[i].apply(x);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = u[j] * silu(g[j]);
  return matvec(down_[i], g);
}

Matrix LayerRuntime::forward(const Matrix& tokens, const ForwardOptions& options) const {
  if (tokens.cols() != router_.cols()) {
    throw ShapeError("forward: tokens have width " + std::to_string(tokens.cols()) + ", model hidden size is " +
                     std::to_string(router_.cols()));
  }
  Matrix out(tokens.rows(), tokens.cols());
  for (std::size_t t = 0; t < tokens.rows(); ++t) {
    const auto x = tokens.row(t);
    const auto decision = route_token(x, options);
    auto y = out.row(t);
    for (std::size_t s = 0; s < decision.experts.size(); ++s) {
      const auto e = expert(decision.experts[s], x);
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += decision.gates[s] * e[j];
    }
  }
  return out;
}

Matrix moe_forward(const MoEModel& model, std::size_t layer, const Matrix& tokens, const ForwardOptions& options) {
  return LayerRuntime(model, layer).forward(tokens, options);
}

Matrix moe_forward(const CompressedModel& model, std::size_t layer, const Matrix& tokens,
                   const ForwardOptions& options) {
  return LayerRuntime(model, layer, options.materialize).forward(tokens, options);
}

Matrix random_tokens(std::size_t count, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix tokens(count, hidden);
  for (double& v : tokens.data()) v = normal(rng);
  return tokens;
}

void write_tokens(const std::filesystem::path& path, const Matrix& tokens) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string() + " for writing");
  detail::Writer w(out);
  w.u32(static_cast<std::uint32_t>(tokens.rows()));
  w.u32(static_cast<std::uint32_t>(tokens.cols()));
  w.tensor(tokens);
  out.flush();
  if (!out) throw IoError(IoError::Kind::kWrite, "write to " + path.string() + " failed");
}

Matrix read_tokens(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string() + ": " + ec.message());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string());
  detail::Reader r(in, size);
  const std::uint64_t t = r.u32(), d = r.u32();
  if (t * d * 4 > r.remaining()) throw IoError(IoError::Kind::kTruncated, path.string() + ": token payload truncated");
  if (t * d * 4 < r.remaining()) throw IoError(IoError::Kind::kDimension, path.string() + ": trailing bytes");
  return r.tensor(t, d);
}

}  // namespace mobe
