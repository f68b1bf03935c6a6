#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mobe/model.hpp"

namespace mobe {

/// Scalar mean and population std over every entry of every expert of one
/// matrix type in one layer.
struct WeightStats {
  double mu = 0.0;
  double sigma = 0.0;
};

/// Below this std, z-scoring is refused.
inline constexpr double kDegenerateSigma = 1e-12;

enum class MeanMode {
  kScalar,  // one μ for all entries
  kMatrix,  // elementwise p x d mean across experts; σ is the scalar std of W - μ
};

struct NormalizedWeights {
  std::vector<Matrix> weights;
  WeightStats stats;
  std::optional<Matrix> mean_matrix;  // set in kMatrix mode
};

WeightStats weight_stats(std::span<const Matrix> weights);

/// W_Z^i = (W^i - μ) / σ. Throws DegenerateInputError when σ < kDegenerateSigma
/// and ShapeError for an empty or ragged list.
NormalizedWeights zscore(std::span<const Matrix> weights, MeanMode mode = MeanMode::kScalar);

/// Replaces every transform A^i by σ·A^i so the projection reconstructs at the
/// original scale. The mean is not reinstated.
BasisProjection fold_sigma(BasisProjection projection, const WeightStats& stats);

/// ‖(σŴ_Z + μ) - σŴ_Z‖_F for a scalar μ over a p x d matrix: |μ|·√(p·d).
double mean_omission_cost(double mu, std::size_t rows, std::size_t cols);

struct StatsRow {
  std::size_t layer = 0;
  MatrixType type = MatrixType::kGate;
  WeightStats stats;
};

/// Per layer, gate and up statistics.
std::vector<StatsRow> stats_report(const MoEModel& model);

/// CSV with header `layer,type,mu,sigma`.
void write_stats_csv(std::ostream& out, std::span<const StatsRow> rows);

}  // namespace mobe
