#include "mobe/model.hpp"

#include <string>

#include "mobe/basis.hpp"
#include "mobe/errors.hpp"

namespace mobe {

namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(what + " is " + m.shape_string() + ", expected " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

void expect_count(const std::vector<Matrix>& v, std::size_t count, std::size_t rows, std::size_t cols,
                  const std::string& what) {
  if (v.size() != count) {
    throw ShapeError(what + ": " + std::to_string(v.size()) + " matrices, expected " + std::to_string(count));
  }
  for (std::size_t i = 0; i < v.size(); ++i) expect_shape(v[i], rows, cols, what + "[" + std::to_string(i) + "]");
}

}  // namespace

std::string_view to_string(MatrixType type) { return type == MatrixType::kGate ? "gate" : "up"; }

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kMobe: return "mobe";
    case Method::kSvd: return "svd";
    case Method::kMolae: return "molae";
    case Method::kD2moe: return "d2moe";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::kMobe, Method::kSvd, Method::kMolae, Method::kD2moe}) {
    if (to_string(m) == name) return m;
  }
  throw ArgumentError("unknown method '" + std::string(name) + "'");
}

Method method_from_tag(std::uint32_t tag) {
  if (tag > static_cast<std::uint32_t>(Method::kD2moe)) {
    throw ArgumentError("unknown method tag " + std::to_string(tag));
  }
  return static_cast<Method>(tag);
}

void MoEConfig::validate() const {
  if (layers < 1) throw ArgumentError("config: layers must be >= 1");
  if (experts < 2) throw ArgumentError("config: experts must be >= 2");
  if (hidden < 1 || intermediate < 1) throw ArgumentError("config: hidden and intermediate must be >= 1");
  if (top_k < 1 || top_k > experts) {
    throw ArgumentError("config: top_k " + std::to_string(top_k) + " outside [1, " + std::to_string(experts) + "]");
  }
  if (activated_override && (*activated_override < 1 || *activated_override > top_k)) {
    throw ArgumentError("config: activated_override must lie in [1, top_k]");
  }
}

void MoEModel::validate() const {
  config.validate();
  if (layers.size() != config.layers) {
    throw ShapeError("model has " + std::to_string(layers.size()) + " layers, config says " +
                     std::to_string(config.layers));
  }
  const std::size_t n = config.experts, d = config.hidden, p = config.intermediate;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string at = "layer " + std::to_string(l) + " ";
    expect_count(layers[l].gate, n, p, d, at + "gate");
    expect_count(layers[l].up, n, p, d, at + "up");
    expect_count(layers[l].down, n, d, p, at + "down");
    expect_shape(layers[l].router, n, d, at + "router");
  }
}

std::size_t contiguous_group(std::size_t expert, std::size_t experts, std::size_t groups) {
  return expert * groups / experts;
}

void CompressedModel::validate() const {
  config.validate();
  const std::size_t n = config.experts, d = config.hidden, p = config.intermediate;
  const std::size_t r = spec.rank;
  if (layers.size() != config.layers) {
    throw ShapeError("compressed model has " + std::to_string(layers.size()) + " layers, config says " +
                     std::to_string(config.layers));
  }
  if (r < 1 || r > std::min(p, d)) throw ArgumentError("rank " + std::to_string(r) + " outside [1, min(p, d)]");
  if (spec.groups < 1) throw ArgumentError("group count must be >= 1");

  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string at = "layer " + std::to_string(l) + " ";
    expect_count(layer.down, n, d, p, at + "down");
    expect_shape(layer.router, n, d, at + "router");
    for (auto type : kFactorizedTypes) {
      const std::string where = at + std::string(to_string(type));
      const auto& proj = layer.projection(type);
      if (spec.method == Method::kMobe) {
        const auto* basis = std::get_if<BasisProjection>(&proj);
        if (!basis) throw ShapeError(where + ": expected a basis projection");
        if (spec.basis_count == 0 || spec.basis_count % spec.groups != 0) {
          throw ArgumentError("basis count must be a positive multiple of the group count");
        }
        expect_count(basis->transforms, n, p, r, where + " transform");
        expect_count(basis->bases, spec.basis_count, r, d, where + " basis");
        expect_shape(basis->logits, n, spec.basis_count / spec.groups, where + " logits");
        if (basis->groups != spec.groups || basis->activation != spec.activation) {
          throw ShapeError(where + ": projection disagrees with header group count or activation");
        }
        if (basis->mu.has_value() != spec.mu_present) throw ShapeError(where + ": mean bias presence mismatch");
        if (basis->mu) expect_shape(*basis->mu, p, d, where + " mu");
      } else {
        const auto* lr = std::get_if<LowRankProjection>(&proj);
        if (!lr) throw ShapeError(where + ": expected a low-rank projection");
        expect_count(lr->left, n, p, r, where + " left");
        const std::size_t rights = spec.method == Method::kMolae ? spec.basis_count : n;
        expect_count(lr->right, rights, r, d, where + " right");
        if (lr->right_index.size() != n) throw ShapeError(where + ": right_index length mismatch");
        // The container stores no index table: MoLAE groups are contiguous,
        // the other baselines own one right factor per expert.
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t expected =
              spec.method == Method::kMolae ? contiguous_group(i, n, spec.basis_count) : i;
          if (lr->right_index[i] != expected) {
            throw ShapeError(where + ": expert " + std::to_string(i) + " uses right factor " +
                             std::to_string(lr->right_index[i]) + ", container layout requires " +
                             std::to_string(expected));
          }
        }
        if (lr->shared.has_value() != (spec.method == Method::kD2moe)) {
          throw ShapeError(where + ": shared matrix presence does not match method");
        }
        if (lr->shared) expect_shape(*lr->shared, p, d, where + " shared");
      }
    }
  }
}

std::vector<Matrix> materialize(const CompressedProjection& projection) {
  return std::visit(
      [](const auto& proj) {
        using T = std::decay_t<decltype(proj)>;
        std::vector<Matrix> out;
        if constexpr (std::is_same_v<T, BasisProjection>) {
          out.reserve(proj.transforms.size());
          for (std::size_t i = 0; i < proj.transforms.size(); ++i) out.push_back(reconstruct_expert(proj, i));
        } else {
          out.reserve(proj.left.size());
          for (std::size_t i = 0; i < proj.left.size(); ++i) {
            Matrix w = matmul(proj.left[i], proj.right.at(proj.right_index.at(i)));
            if (proj.shared) w += *proj.shared;
            out.push_back(std::move(w));
          }
        }
        return out;
      },
      projection);
}

std::size_t expert_parameter_count(const MoEModel& model) {
  std::size_t total = 0;
  for (const auto& layer : model.layers) {
    for (const auto* set : {&layer.gate, &layer.up, &layer.down}) {
      for (const auto& m : *set) total += m.size();
    }
  }
  return total;
}

std::size_t expert_parameter_count(const CompressedModel& model) {
  std::size_t total = 0;
  for (const auto& layer : model.layers) {
    for (const auto& m : layer.down) total += m.size();
    for (auto type : kFactorizedTypes) {
      std::visit(
          [&total](const auto& proj) {
            using T = std::decay_t<decltype(proj)>;
            if constexpr (std::is_same_v<T, BasisProjection>) {
              for (const auto& m : proj.transforms) total += m.size();
              for (const auto& m : proj.bases) total += m.size();
            } else {
              for (const auto& m : proj.left) total += m.size();
              for (const auto& m : proj.right) total += m.size();
              if (proj.shared) total += proj.shared->size();
            }
          },
          layer.projection(type));
    }
  }
  return total;
}

}  // namespace mobe
