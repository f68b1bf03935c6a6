#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mobe/model.hpp"

namespace mobe {

/// Selected experts and their router probabilities, best first.
struct RoutingDecision {
  std::vector<std::size_t> experts;
  std::vector<double> gates;
};

/// Softmax over router·x, then top-k by probability; ties go to the lower
/// index. Gates are the selected softmax probabilities, renormalized to sum to
/// one only when `renormalize` is set.
RoutingDecision route(const Matrix& router, std::span<const double> x, std::size_t k, bool renormalize = false);

/// SwiGLU expert: down · (up·x ⊙ SiLU(gate·x)).
std::vector<double> expert_forward(const Matrix& gate, const Matrix& up, const Matrix& down, std::span<const double> x);

struct ForwardOptions {
  std::optional<std::size_t> k_override;  // MoBE†: activate k' <= k experts
  bool renormalize = false;
  /// Compressed models only: evaluate Ŵ^i·x from materialized weights instead
  /// of the factorized path.
  bool materialize = false;
};

/// One MoE layer prepared for inference. For compressed layers the per-expert
/// right factors (f(Σ α B) or the low-rank right matrix) are computed once at
/// construction and reused for every token.
class LayerRuntime {
 public:
  LayerRuntime(const MoEModel& model, std::size_t layer);
  LayerRuntime(const CompressedModel& model, std::size_t layer, bool materialize = false);

  /// y = Σ_{selected i} G^i(x) E^i(x) for every row of `tokens` (t x d).
  Matrix forward(const Matrix& tokens, const ForwardOptions& options = {}) const;
  RoutingDecision route_token(std::span<const double> x, const ForwardOptions& options = {}) const;

  std::size_t experts() const noexcept { return down_.size(); }

 private:
  /// y = outer · (inner ? inner·x : x) [+ dense·x]
  struct Projection {
    Matrix outer;
    std::optional<Matrix> inner;
    std::optional<Matrix> dense;

    std::vector<double> apply(std::span<const double> x) const;
  };

  std::vector<double> expert(std::size_t i, std::span<const double> x) const;

  std::vector<Projection> gate_;
  std::vector<Projection> up_;
  std::vector<Matrix> down_;
  Matrix router_;
  std::size_t top_k_ = 1;
};

Matrix moe_forward(const MoEModel& model, std::size_t layer, const Matrix& tokens, const ForwardOptions& options = {});
Matrix moe_forward(const CompressedModel& model, std::size_t layer, const Matrix& tokens,
                   const ForwardOptions& options = {});

/// t x d standard-normal tokens.
Matrix random_tokens(std::size_t count, std::size_t hidden, std::uint64_t seed);

/// Token batch file: u32 t, u32 d (little-endian), then t·d f32 row-major.
void write_tokens(const std::filesystem::path& path, const Matrix& tokens);
Matrix read_tokens(const std::filesystem::path& path);

}  // namespace mobe
