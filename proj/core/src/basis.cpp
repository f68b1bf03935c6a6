#include "mobe/basis.hpp"

#include <algorithm>
#include <cmath>

#include "mobe/errors.hpp"

namespace mobe {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("softmax: empty logits");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(logits[j] - peak);
    total += out[j];
  }
  for (double& v : out) v /= total;
  return out;
}

Matrix mix_bases(std::span<const Matrix> bases, std::span<const double> weights) {
  if (bases.empty() || bases.size() != weights.size()) {
    throw ShapeError("mix_bases: " + std::to_string(bases.size()) + " bases vs " + std::to_string(weights.size()) +
                     " weights");
  }
  Matrix mixed(bases.front().rows(), bases.front().cols());
  auto out = mixed.data();
  for (std::size_t j = 0; j < bases.size(); ++j) {
    if (bases[j].rows() != mixed.rows() || bases[j].cols() != mixed.cols()) {
      throw ShapeError("mix_bases: basis " + std::to_string(j) + " is " + bases[j].shape_string() + ", expected " +
                       mixed.shape_string());
    }
    const double w = weights[j];
    auto src = bases[j].data();
    for (std::size_t e = 0; e < out.size(); ++e) out[e] += w * src[e];
  }
  return mixed;
}

Matrix reconstruct(const Matrix& transform, std::span<const Matrix> bases, std::span<const double> logits,
                   Activation act) {
  const auto alpha = softmax(logits);
  Matrix right = activate(act, mix_bases(bases, alpha));
  return matmul(transform, right);
}

Matrix expert_right_factor(const BasisProjection& projection, std::size_t expert) {
  const std::size_t per = projection.bases_per_group();
  const std::size_t group = projection.group_of(expert);
  std::span<const Matrix> bases(projection.bases.data() + group * per, per);
  return activate(projection.activation, mix_bases(bases, softmax(projection.logits.row(expert))));
}

Matrix reconstruct_expert(const BasisProjection& projection, std::size_t expert) {
  Matrix w = matmul(projection.transforms.at(expert), expert_right_factor(projection, expert));
  if (projection.mu) w += *projection.mu;
  return w;
}

}  // namespace mobe
