#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mobe/adam.hpp"
#include "mobe/model.hpp"
#include "mobe/normalizer.hpp"

namespace mobe {

/// Learning-rate multiplier over the step budget. kCosine ramps up linearly
/// over the first kWarmupFraction of the steps, then decays to 0 along a half
/// cosine.
enum class LrSchedule { kConstant, kCosine };
inline constexpr double kWarmupFraction = 0.05;

LrSchedule parse_lr_schedule(std::string_view name);
std::string_view to_string(LrSchedule schedule);
double lr_multiplier(LrSchedule schedule, std::size_t step, std::size_t steps);

struct FactorizeConfig {
  std::uint32_t basis_count = 0;  // m, must be < n
  std::uint32_t rank = 0;         // r; 0 means r = p
  Activation activation = Activation::kSilu;
  AdamConfig adam;
  LrSchedule schedule = LrSchedule::kCosine;
  std::size_t steps = 5000;
  std::uint64_t seed = 0;
  std::uint32_t groups = 1;
  bool normalize = true;
  MeanMode mean_mode = MeanMode::kScalar;
  /// Store μ as a bias. Always on in MeanMode::kMatrix.
  bool keep_mu = false;
  /// Stop when the relative loss improvement over the last 200 steps is < 1e-7.
  bool early_stop = false;
  double init_jitter = 1e-3;

  std::size_t resolved_rank(std::size_t intermediate) const { return rank == 0 ? intermediate : rank; }
  /// Throws ArgumentError for m >= n, r outside [1, p], steps == 0, lr <= 0 or
  /// a group count that does not divide m.
  void validate(std::size_t experts, std::size_t intermediate) const;
};

inline constexpr std::size_t kEarlyStopWindow = 200;
inline constexpr double kEarlyStopTolerance = 1e-7;
inline constexpr double kDivergenceFactor = 1e3;
inline constexpr std::size_t kDivergencePatience = 200;

struct LossAndGrads {
  double loss = 0.0;
  std::vector<double> expert_errors;
  std::vector<Matrix> d_transforms;
  std::vector<Matrix> d_bases;
  Matrix d_logits;
};

/// Σ_i ‖W^i - A^i f(Σ_j α^{i,j} B^j)‖_F² and its closed-form gradient with
/// respect to every transform, basis and logit (chain rule through f and the
/// softmax). The mean bias, if any, is ignored.
LossAndGrads loss_and_grads(std::span<const Matrix> experts, const BasisProjection& params);

/// Objective only.
double objective(std::span<const Matrix> experts, const BasisProjection& params);

struct TrainTrace {
  std::vector<double> losses;  // objective before each update, in the optimized (normalized) space
  double initial_loss = 0.0;
  double final_loss = 0.0;     // objective at the returned parameters, optimized space
  /// ‖W^i - Ŵ^i‖² per expert against the original weights, using the returned
  /// (folded) projection including its bias when stored.
  std::vector<double> expert_errors;
  double original_energy = 0.0;  // Σ‖W^i‖²
  WeightStats stats{0.0, 1.0};
  bool normalized = false;
  bool early_stopped = false;
  double seconds = 0.0;

  double original_error() const;
  /// Σ‖W - Ŵ‖² / Σ‖W‖² in original units.
  double relative_error() const;
};

struct FactorizeResult {
  BasisProjection projection;
  TrainTrace trace;
};

/// SVD warm start: A^i = U_r √s_r of each expert; each basis is √s_r V_rᵀ of a
/// distinct random expert of its group plus jitter; logits zero.
BasisProjection initialize_factors(std::span<const Matrix> experts, const FactorizeConfig& config);

/// Normalize (optional), initialize, run Adam for config.steps and fold σ back.
FactorizeResult factorize_layer(std::span<const Matrix> experts, const FactorizeConfig& config);

struct LayerTrace {
  std::size_t layer = 0;
  MatrixType type = MatrixType::kGate;
  TrainTrace trace;
};

struct ConversionResult {
  CompressedModel model;
  std::vector<LayerTrace> traces;  // layer-major, gate before up
};

using ProgressFn = std::function<void(const std::string&)>;

/// Factorizes gate and up of every layer; down matrices and router are copied
/// verbatim. Tasks run on `jobs` threads; results do not depend on `jobs`.
ConversionResult convert_model(const MoEModel& model, const FactorizeConfig& config, std::size_t jobs = 1,
                               const ProgressFn& progress = {});

/// Per-task seed so that every (layer, type) draws an independent stream.
std::uint64_t task_seed(std::uint64_t seed, std::size_t layer, MatrixType type);

}  // namespace mobe
