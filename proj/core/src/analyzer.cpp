#include "mobe/analyzer.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

#include "mobe/errors.hpp"

namespace mobe {

namespace {

ParamCounts mobe_counts(std::uint64_t n, std::uint64_t d, std::uint64_t p, std::uint64_t r, std::uint64_t m,
                        std::uint64_t k) {
  return {n * d * p + 2 * n * p * r + 2 * m * r * d, k * d * p + 2 * k * p * r + 2 * k * r * d};
}

void require_same_config(const MoEConfig& a, const MoEConfig& b, const std::string& label) {
  if (a.layers != b.layers || a.experts != b.experts || a.hidden != b.hidden || a.intermediate != b.intermediate) {
    throw ShapeError("variant '" + label + "' has dimensions (L, n, d, p) = (" + std::to_string(b.layers) + ", " +
                     std::to_string(b.experts) + ", " + std::to_string(b.hidden) + ", " +
                     std::to_string(b.intermediate) + "), original has (" + std::to_string(a.layers) + ", " +
                     std::to_string(a.experts) + ", " + std::to_string(a.hidden) + ", " +
                     std::to_string(a.intermediate) + ")");
  }
}

const MoEConfig& config_of(const ModelVariant& v) {
  return std::visit([](const auto& m) -> const MoEConfig& { return m.config; }, v.model);
}

}  // namespace

std::size_t effective_rank_from_singular_values(std::span<const double> singular_values, double threshold) {
  double total = 0.0;
  for (double s : singular_values) total += s * s;
  if (!(total > 0.0)) throw DegenerateInputError("effective rank of a zero matrix is undefined");
  double cumulative = 0.0;
  for (std::size_t k = 0; k < singular_values.size(); ++k) {
    cumulative += singular_values[k] * singular_values[k];
    if (cumulative / total > threshold) return k + 1;
  }
  return singular_values.size();
}

std::size_t effective_rank(const Matrix& matrix, double threshold) {
  if (frobenius_sq(matrix) == 0.0) throw DegenerateInputError("effective rank of a zero matrix is undefined");
  return effective_rank_from_singular_values(svd(matrix).s, threshold);
}

double svd_threshold(std::size_t p, std::size_t d) {
  if (p < 1 || d < 1) throw ArgumentError("svd_threshold: dimensions must be >= 1");
  return double(p) * double(d) / double(p + d);
}

double compression_gamma(std::size_t n, std::size_t d, std::size_t p, std::size_t r, std::size_t m) {
  const double num = double(n) * d * p + 2.0 * n * p * r + 2.0 * m * r * d;
  return num / (3.0 * n * d * p);
}

ParamAccount param_account(const MoEConfig& config, std::size_t rank, std::size_t basis_count,
                           std::optional<std::uint32_t> reduced_k) {
  config.validate();
  const std::uint64_t L = config.layers, n = config.experts, d = config.hidden, p = config.intermediate;
  const std::uint64_t k = config.top_k;
  const std::uint64_t k_dagger = reduced_k.value_or(config.activated_override.value_or(config.top_k));
  if (k_dagger < 1 || k_dagger > k) throw ArgumentError("reduced activated experts must lie in [1, k]");

  ParamAccount out;
  out.moe = {L * 3 * n * d * p, L * 3 * k * d * p};
  const auto per_layer = mobe_counts(n, d, p, rank, basis_count, k);
  const auto per_layer_dagger = mobe_counts(n, d, p, rank, basis_count, k_dagger);
  out.mobe = {L * per_layer.total, L * per_layer.activated};
  out.mobe_dagger = {L * per_layer_dagger.total, L * per_layer_dagger.activated};
  out.gamma = compression_gamma(n, d, p, rank, basis_count);
  out.activated_experts = static_cast<std::uint32_t>(k_dagger);
  return out;
}

std::vector<RankRow> rank_report(const MoEModel& model, double threshold) {
  model.validate();
  std::vector<RankRow> rows;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const std::pair<const char*, const std::vector<Matrix>*> sets[] = {
        {"gate", &layer.gate}, {"up", &layer.up}, {"down", &layer.down}};
    for (const auto& [name, mats] : sets) {
      RankRow row{l, name, 0.0, std::numeric_limits<std::size_t>::max(), 0,
                  svd_threshold(mats->front().rows(), mats->front().cols())};
      for (const auto& m : *mats) {
        const auto re = effective_rank(m, threshold);
        row.mean += double(re);
        row.min = std::min(row.min, re);
        row.max = std::max(row.max, re);
      }
      row.mean /= double(mats->size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<Matrix> variant_weights(const ModelVariant& variant, std::size_t layer, MatrixType type) {
  if (const auto* moe = std::get_if<MoEModel>(&variant.model)) return moe->layers.at(layer).weights(type);
  return materialize(std::get<CompressedModel>(variant.model).layers.at(layer).projection(type));
}

std::vector<MseRow> mse_report(const MoEModel& original, std::span<const ModelVariant> variants) {
  original.validate();
  const auto& c = original.config;
  const double entries = double(c.experts) * c.intermediate * c.hidden;
  std::vector<MseRow> rows;
  for (const auto& v : variants) require_same_config(c, config_of(v), v.label);

  for (std::size_t l = 0; l < original.layers.size(); ++l) {
    for (auto type : kFactorizedTypes) {
      const auto& truth = original.layers[l].weights(type);
      for (const auto& v : variants) {
        const auto approx = variant_weights(v, l, type);
        double frob = 0.0;
        for (std::size_t i = 0; i < truth.size(); ++i) frob += frobenius_dist_sq(truth[i], approx.at(i));
        rows.push_back({l, type, v.label, frob / entries, frob});
      }
    }
  }
  return rows;
}

std::vector<ParamRow> param_report(const MoEModel& original, std::span<const ModelVariant> variants,
                                   std::optional<std::uint32_t> reduced_k) {
  const auto& c = original.config;
  const std::uint64_t L = c.layers, d = c.hidden, p = c.intermediate, k = c.top_k;
  const std::uint64_t moe_total = expert_parameter_count(original);
  std::vector<ParamRow> rows;
  rows.push_back({"moe", moe_total, L * 3 * k * d * p, 1.0});

  for (const auto& v : variants) {
    require_same_config(c, config_of(v), v.label);
    if (const auto* moe = std::get_if<MoEModel>(&v.model)) {
      const std::uint64_t total = expert_parameter_count(*moe);
      rows.push_back({v.label, total, L * 3 * k * d * p, double(total) / double(moe_total)});
      continue;
    }
    const auto& cm = std::get<CompressedModel>(v.model);
    const std::uint64_t total = expert_parameter_count(cm);
    const std::uint64_t r = cm.spec.rank;
    auto activated_for = [&](std::uint64_t kk) -> std::uint64_t {
      switch (cm.spec.method) {
        case Method::kMobe: return L * (kk * d * p + 2 * kk * p * r + 2 * kk * r * d);
        case Method::kSvd: return L * (kk * d * p + 2 * kk * r * (p + d));
        case Method::kMolae:
          return L * (kk * d * p + 2 * (kk * p * r + std::min<std::uint64_t>(kk, cm.spec.basis_count) * r * d));
        case Method::kD2moe: return L * (kk * d * p + 2 * (p * d + kk * r * (p + d)));
      }
      return 0;
    };
    rows.push_back({v.label, total, activated_for(k), double(total) / double(moe_total)});
    const auto k_dagger = reduced_k ? reduced_k : cm.config.activated_override;
    if (cm.spec.method == Method::kMobe && k_dagger && *k_dagger < k) {
      rows.push_back({v.label + "-dagger", total, activated_for(*k_dagger),
                      double(total) / double(moe_total)});
    }
  }
  return rows;
}

void write_rank_csv(std::ostream& out, std::span<const RankRow> rows) {
  out << "layer,type,mean_re,min_re,max_re,threshold\n";
  for (const auto& r : rows) {
    out << r.layer << ',' << r.type << ',' << r.mean << ',' << r.min << ',' << r.max << ',' << r.threshold << '\n';
  }
}

void write_mse_csv(std::ostream& out, std::span<const MseRow> rows) {
  out << "layer,type,method,mse,frob_sq\n";
  const auto old = out.precision(10);
  for (const auto& r : rows) {
    out << r.layer << ',' << to_string(r.type) << ',' << r.method << ',' << r.mse << ',' << r.frob_sq << '\n';
  }
  out.precision(old);
}

void write_param_csv(std::ostream& out, std::span<const ParamRow> rows) {
  out << "method,total,activated,gamma\n";
  const auto old = out.precision(10);
  for (const auto& r : rows) out << r.method << ',' << r.total << ',' << r.activated << ',' << r.gamma << '\n';
  out.precision(old);
}

}  // namespace mobe
