#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mobe/model.hpp"

namespace mobe {

/// Smallest k with Σ_{i<=k} σ_i² / Σ_i σ_i² > threshold (strict). Throws
/// DegenerateInputError for a zero matrix.
std::size_t effective_rank(const Matrix& matrix, double threshold = 0.95);
std::size_t effective_rank_from_singular_values(std::span<const double> singular_values, double threshold = 0.95);

/// Rank below which a two-factor decomposition of a p x d matrix saves
/// parameters: p·d / (p + d).
double svd_threshold(std::size_t p, std::size_t d);

/// Total-parameter ratio (ndp + 2npr + 2mrd) / (3ndp) of MoBE over MoE.
double compression_gamma(std::size_t n, std::size_t d, std::size_t p, std::size_t r, std::size_t m);

struct ParamCounts {
  std::uint64_t total = 0;
  std::uint64_t activated = 0;
};

/// Whole-model counts (per-layer counts times L).
struct ParamAccount {
  ParamCounts moe;
  ParamCounts mobe;
  ParamCounts mobe_dagger;  // activated experts k' (defaults to k)
  double gamma = 0.0;
  std::uint32_t activated_experts = 0;
};

/// Counts for MoE, MoBE and MoBE† with rank r and m bases. `reduced_k`
/// overrides config.activated_override for MoBE†.
ParamAccount param_account(const MoEConfig& config, std::size_t rank, std::size_t basis_count,
                           std::optional<std::uint32_t> reduced_k = std::nullopt);

struct RankRow {
  std::size_t layer = 0;
  std::string type;  // gate, up or down
  double mean = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
  double threshold = 0.0;  // svd_threshold of the matrix shape
};

std::vector<RankRow> rank_report(const MoEModel& model, double threshold = 0.95);

/// A model to compare against the original; a MoE variant is compared tensor
/// by tensor, a compressed one through its materialized projections.
struct ModelVariant {
  std::string label;
  std::variant<MoEModel, CompressedModel> model;
};

/// Materialized gate or up weights of one layer of a variant.
std::vector<Matrix> variant_weights(const ModelVariant& variant, std::size_t layer, MatrixType type);

struct MseRow {
  std::size_t layer = 0;
  MatrixType type = MatrixType::kGate;
  std::string method;
  double mse = 0.0;      // Σ_i ‖W^i - Ŵ^i‖² / (n·p·d)
  double frob_sq = 0.0;  // Σ_i ‖W^i - Ŵ^i‖²
};

/// Throws ShapeError when a variant's dimensions differ from the original.
std::vector<MseRow> mse_report(const MoEModel& original, std::span<const ModelVariant> variants);

struct ParamRow {
  std::string method;
  std::uint64_t total = 0;
  std::uint64_t activated = 0;
  double gamma = 0.0;  // total / MoE total
};

/// One row for the original MoE plus one per variant. Counts come from the
/// stored tensors. MoBE variants add a "<label>-dagger" row when a reduced
/// activated-expert count k' < k is given (or set in the variant's config).
std::vector<ParamRow> param_report(const MoEModel& original, std::span<const ModelVariant> variants,
                                   std::optional<std::uint32_t> reduced_k = std::nullopt);

void write_rank_csv(std::ostream& out, std::span<const RankRow> rows);
void write_mse_csv(std::ostream& out, std::span<const MseRow> rows);
void write_param_csv(std::ostream& out, std::span<const ParamRow> rows);

}  // namespace mobe
