#pragma once

#include <span>
#include <vector>

#include "mobe/activation.hpp"
#include "mobe/linalg.hpp"
#include "mobe/model.hpp"

namespace mobe {

/// Numerically stable softmax. The result is non-negative and sums to one.
std::vector<double> softmax(std::span<const double> logits);

/// Σ_j weights_j · bases_j.
Matrix mix_bases(std::span<const Matrix> bases, std::span<const double> weights);

/// Ŵ = transform · f(Σ_j softmax(logits)_j · B^j).
Matrix reconstruct(const Matrix& transform, std::span<const Matrix> bases, std::span<const double> logits,
                   Activation act);

/// f(Σ_j α^{i,j} B^j) for one expert of a basis projection: the r x d right
/// factor that the factorized forward pass applies to tokens.
Matrix expert_right_factor(const BasisProjection& projection, std::size_t expert);

/// Ŵ^i for one expert, including the mean bias when present.
Matrix reconstruct_expert(const BasisProjection& projection, std::size_t expert);

}  // namespace mobe
