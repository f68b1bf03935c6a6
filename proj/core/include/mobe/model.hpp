#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "mobe/activation.hpp"
#include "mobe/linalg.hpp"

namespace mobe {

enum class MatrixType { kGate, kUp };

std::string_view to_string(MatrixType type);
inline constexpr MatrixType kFactorizedTypes[] = {MatrixType::kGate, MatrixType::kUp};

/// Compression method; numeric values are the on-disk method tags.
enum class Method : std::uint32_t {
  kMobe = 0,
  kSvd = 1,
  kMolae = 2,
  kD2moe = 3,
};

std::string_view to_string(Method method);
Method parse_method(std::string_view name);
Method method_from_tag(std::uint32_t tag);

struct MoEConfig {
  std::uint32_t layers = 1;
  std::uint32_t experts = 2;       // n
  std::uint32_t hidden = 1;        // d
  std::uint32_t intermediate = 1;  // p
  std::uint32_t top_k = 1;         // k
  std::optional<std::uint32_t> activated_override;  // k' <= k

  /// Throws ArgumentError when n < 2, k outside [1, n], a zero dimension, or k' > k.
  void validate() const;
  friend bool operator==(const MoEConfig&, const MoEConfig&) = default;
};

/// One layer of a standard MoE: per-expert gate/up (p x d), down (d x p), router (n x d).
struct MoELayer {
  std::vector<Matrix> gate;
  std::vector<Matrix> up;
  std::vector<Matrix> down;
  Matrix router;

  const std::vector<Matrix>& weights(MatrixType type) const { return type == MatrixType::kGate ? gate : up; }
  std::vector<Matrix>& weights(MatrixType type) { return type == MatrixType::kGate ? gate : up; }
  friend bool operator==(const MoELayer&, const MoELayer&) = default;
};

struct MoEModel {
  MoEConfig config;
  std::vector<MoELayer> layers;

  /// Throws ShapeError when any tensor disagrees with `config`.
  void validate() const;
  friend bool operator==(const MoEModel&, const MoEModel&) = default;
};

/// Group index of `expert` when n experts are split into `groups` contiguous,
/// near-equal runs.
std::size_t contiguous_group(std::size_t expert, std::size_t experts, std::size_t groups);

/// Shared-basis factorization of one matrix type of one layer:
///   Ŵ^i = transforms[i] · f(Σ_j softmax(logits.row(i))_j · B^{group(i), j}) [+ mu]
/// Bases are stored group-major; each group owns bases_per_group() of them.
struct BasisProjection {
  std::vector<Matrix> transforms;  // n of p x r
  std::vector<Matrix> bases;       // m of r x d
  Matrix logits;                   // n x (m / groups)
  std::size_t groups = 1;
  Activation activation = Activation::kSilu;
  std::optional<Matrix> mu;        // p x d bias, absent by default

  std::size_t bases_per_group() const { return bases.size() / groups; }
  std::size_t group_of(std::size_t expert) const { return contiguous_group(expert, transforms.size(), groups); }
  friend bool operator==(const BasisProjection&, const BasisProjection&) = default;
};

/// Two-factor baseline: Ŵ^i = [shared +] left[i] · right[right_index[i]].
struct LowRankProjection {
  std::vector<Matrix> left;               // n of p x rank
  std::vector<Matrix> right;              // rank x d, one per expert or per group
  std::vector<std::size_t> right_index;   // expert -> right factor
  std::optional<Matrix> shared;           // p x d, uncompressed

  friend bool operator==(const LowRankProjection&, const LowRankProjection&) = default;
};

using CompressedProjection = std::variant<BasisProjection, LowRankProjection>;

struct CompressedLayer {
  CompressedProjection gate;
  CompressedProjection up;
  std::vector<Matrix> down;
  Matrix router;

  const CompressedProjection& projection(MatrixType type) const { return type == MatrixType::kGate ? gate : up; }
  CompressedProjection& projection(MatrixType type) { return type == MatrixType::kGate ? gate : up; }
  friend bool operator==(const CompressedLayer&, const CompressedLayer&) = default;
};

/// Header-level description of a compressed container.
/// rank: r for MoBE, truncation rank for the baselines.
/// basis_count: m for MoBE, latent count for MoLAE, 0 otherwise.
struct CompressionSpec {
  Method method = Method::kMobe;
  std::uint32_t rank = 1;
  std::uint32_t basis_count = 0;
  std::uint32_t groups = 1;
  Activation activation = Activation::kNone;
  bool mu_present = false;

  friend bool operator==(const CompressionSpec&, const CompressionSpec&) = default;
};

struct CompressedModel {
  MoEConfig config;
  CompressionSpec spec;
  std::vector<CompressedLayer> layers;

  void validate() const;
  friend bool operator==(const CompressedModel&, const CompressedModel&) = default;
};

/// Materialized per-expert weights Ŵ^i of a compressed projection.
std::vector<Matrix> materialize(const CompressedProjection& projection);

/// Parameter elements in the scope of the total-parameter accounting:
/// gate/up/down matrices for MoE; transforms, bases, shared/low-rank factors
/// and down matrices for compressed models. Router, logits and the optional
/// mean bias are excluded.
std::size_t expert_parameter_count(const MoEModel& model);
std::size_t expert_parameter_count(const CompressedModel& model);

}  // namespace mobe
