#include "mobe/normalizer.hpp"

#include <cmath>
#include <ostream>

#include "mobe/errors.hpp"

namespace mobe {

namespace {

void require_uniform(std::span<const Matrix> weights) {
  if (weights.empty()) throw ShapeError("zscore: empty expert list");
  for (const auto& w : weights) {
    if (w.rows() != weights.front().rows() || w.cols() != weights.front().cols()) {
      throw ShapeError("zscore: expert shapes differ (" + w.shape_string() + " vs " +
                       weights.front().shape_string() + ")");
    }
  }
}

}  // namespace

WeightStats weight_stats(std::span<const Matrix> weights) {
  require_uniform(weights);
  double count = 0.0, sum = 0.0;
  for (const auto& w : weights) {
    for (double v : w.data()) sum += v;
    count += double(w.size());
  }
  const double mu = sum / count;
  double sq = 0.0;
  for (const auto& w : weights) {
    for (double v : w.data()) sq += (v - mu) * (v - mu);
  }
  return {mu, std::sqrt(sq / count)};
}

NormalizedWeights zscore(std::span<const Matrix> weights, MeanMode mode) {
  require_uniform(weights);
  NormalizedWeights out;
  out.weights.assign(weights.begin(), weights.end());

  if (mode == MeanMode::kMatrix) {
    Matrix mean(weights.front().rows(), weights.front().cols());
    for (const auto& w : weights) mean += w;
    mean *= 1.0 / double(weights.size());
    for (auto& w : out.weights) w -= mean;
    // Residuals have zero mean entrywise, so their scalar std is the one to divide by.
    out.stats = weight_stats(out.weights);
    out.stats.mu = 0.0;
    out.mean_matrix = std::move(mean);
  } else {
    out.stats = weight_stats(weights);
    for (auto& w : out.weights) {
      for (double& v : w.data()) v -= out.stats.mu;
    }
  }

  if (out.stats.sigma < kDegenerateSigma) {
    throw DegenerateInputError("zscore: weight std " + std::to_string(out.stats.sigma) +
                               " is below the degenerate threshold");
  }
  const double inv = 1.0 / out.stats.sigma;
  for (auto& w : out.weights) w *= inv;
  return out;
}

BasisProjection fold_sigma(BasisProjection projection, const WeightStats& stats) {
  for (auto& a : projection.transforms) a *= stats.sigma;
  return projection;
}

double mean_omission_cost(double mu, std::size_t rows, std::size_t cols) {
  return std::abs(mu) * std::sqrt(double(rows) * double(cols));
}

std::vector<StatsRow> stats_report(const MoEModel& model) {
  std::vector<StatsRow> rows;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (auto type : kFactorizedTypes) rows.push_back({l, type, weight_stats(model.layers[l].weights(type))});
  }
  return rows;
}

void write_stats_csv(std::ostream& out, std::span<const StatsRow> rows) {
  out << "layer,type,mu,sigma\n";
  const auto old = out.precision(10);
  for (const auto& r : rows) out << r.layer << ',' << to_string(r.type) << ',' << r.stats.mu << ',' << r.stats.sigma << '\n';
  out.precision(old);
}

}  // namespace mobe
