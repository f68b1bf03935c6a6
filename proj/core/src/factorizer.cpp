#include "mobe/factorizer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "mobe/basis.hpp"
#include "mobe/errors.hpp"

namespace mobe {

namespace {

struct ExpertForward {
  std::vector<double> alpha;
  Matrix mixed;   // z = Σ α B
  Matrix right;   // f(z)
};

ExpertForward forward_expert(const BasisProjection& params, std::span<const Matrix> group_bases, std::size_t i) {
  ExpertForward fw;
  fw.alpha = softmax(params.logits.row(i));
  fw.mixed = mix_bases(group_bases, fw.alpha);
  fw.right = activate(params.activation, fw.mixed);
  return fw;
}

std::span<const Matrix> group_bases(const BasisProjection& params, std::size_t expert) {
  const std::size_t per = params.bases_per_group();
  return {params.bases.data() + params.group_of(expert) * per, per};
}

void check_params(std::span<const Matrix> experts, const BasisProjection& params) {
  if (experts.size() != params.transforms.size()) {
    throw ShapeError("loss: " + std::to_string(experts.size()) + " experts vs " +
                     std::to_string(params.transforms.size()) + " transforms");
  }
  if (params.groups == 0 || params.bases.empty() || params.bases.size() % params.groups != 0) {
    throw ShapeError("loss: basis count must be a positive multiple of the group count");
  }
  if (params.logits.rows() != experts.size() || params.logits.cols() != params.bases_per_group()) {
    throw ShapeError("loss: logits are " + params.logits.shape_string() + ", expected " +
                     std::to_string(experts.size()) + "x" + std::to_string(params.bases_per_group()));
  }
}

[[noreturn]] void rethrow_with_context(std::exception_ptr error, const std::string& context) {
  try {
    std::rethrow_exception(error);
  } catch (const DivergenceError& e) {
    throw DivergenceError(context + e.what(), e.step());
  } catch (const NumericError& e) {
    throw NumericError(context + e.what(), e.residual());
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError(context + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(context + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(context + e.what());
  }
}

}  // namespace

void FactorizeConfig::validate(std::size_t experts, std::size_t intermediate) const {
  if (basis_count < 1 || basis_count >= experts) {
    throw ArgumentError("basis count m = " + std::to_string(basis_count) + " must satisfy 1 <= m < n = " +
                        std::to_string(experts));
  }
  const std::size_t r = resolved_rank(intermediate);
  if (r < 1 || r > intermediate) {
    throw ArgumentError("rank r = " + std::to_string(r) + " must satisfy 1 <= r <= p = " + std::to_string(intermediate));
  }
  if (steps < 1) throw ArgumentError("steps must be >= 1");
  if (!(adam.lr > 0.0)) throw ArgumentError("learning rate must be positive");
  if (groups < 1 || basis_count % groups != 0 || groups > experts) {
    throw ArgumentError("group split g = " + std::to_string(groups) + " must divide m = " +
                        std::to_string(basis_count) + " and not exceed n");
  }
}

LossAndGrads loss_and_grads(std::span<const Matrix> experts, const BasisProjection& params) {
  check_params(experts, params);
  const std::size_t n = experts.size();
  const std::size_t per = params.bases_per_group();

  LossAndGrads out;
  out.expert_errors.resize(n);
  out.d_transforms.reserve(n);
  out.d_bases.reserve(params.bases.size());
  for (const auto& b : params.bases) out.d_bases.emplace_back(b.rows(), b.cols());
  out.d_logits = Matrix(params.logits.rows(), params.logits.cols());

  for (std::size_t i = 0; i < n; ++i) {
    const auto bases = group_bases(params, i);
    const auto fw = forward_expert(params, bases, i);
    const Matrix& a = params.transforms[i];

    Matrix residual = matmul(a, fw.right);
    residual -= experts[i];
    out.expert_errors[i] = frobenius_sq(residual);
    out.loss += out.expert_errors[i];

    Matrix d_a = matmul_nt(residual, fw.right);
    d_a *= 2.0;
    out.d_transforms.push_back(std::move(d_a));

    // dL/dz = 2 Aᵀ R ⊙ f'(z)
    Matrix d_mixed = matmul_tn(a, residual);
    d_mixed *= 2.0;
    if (params.activation != Activation::kNone) {
      auto g = d_mixed.data();
      auto z = fw.mixed.data();
      for (std::size_t e = 0; e < g.size(); ++e) g[e] *= activate_derivative(params.activation, z[e]);
    }

    const std::size_t first = params.group_of(i) * per;
    std::vector<double> d_alpha(per);
    for (std::size_t j = 0; j < per; ++j) {
      d_alpha[j] = inner(d_mixed, bases[j]);
      auto dst = out.d_bases[first + j].data();
      auto src = d_mixed.data();
      const double w = fw.alpha[j];
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += w * src[e];
    }
    // Softmax Jacobian: dθ_j = α_j (g_j - Σ_k α_k g_k)
    double mean = 0.0;
    for (std::size_t j = 0; j < per; ++j) mean += fw.alpha[j] * d_alpha[j];
    for (std::size_t j = 0; j < per; ++j) out.d_logits(i, j) = fw.alpha[j] * (d_alpha[j] - mean);
  }
  return out;
}

double objective(std::span<const Matrix> experts, const BasisProjection& params) {
  check_params(experts, params);
  double total = 0.0;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    const auto fw = forward_expert(params, group_bases(params, i), i);
    total += frobenius_dist_sq(matmul(params.transforms[i], fw.right), experts[i]);
  }
  return total;
}

double TrainTrace::original_error() const { return std::accumulate(expert_errors.begin(), expert_errors.end(), 0.0); }

double TrainTrace::relative_error() const { return original_energy > 0.0 ? original_error() / original_energy : 0.0; }

BasisProjection initialize_factors(std::span<const Matrix> experts, const FactorizeConfig& config) {
  const std::size_t n = experts.size();
  const std::size_t p = experts.front().rows();
  const std::size_t r = config.resolved_rank(p);
  const std::size_t groups = config.groups;
  const std::size_t per = config.basis_count / groups;

  BasisProjection init;
  init.groups = groups;
  init.activation = config.activation;
  init.logits = Matrix(n, per);

  std::vector<Matrix> right_factors;
  right_factors.reserve(n);
  for (const auto& w : experts) {
    const auto dec = svd(w);
    const std::size_t keep = std::min(r, dec.s.size());
    Matrix a(p, r);
    Matrix b(r, w.cols());
    for (std::size_t c = 0; c < keep; ++c) {
      const double root = std::sqrt(dec.s[c]);
      for (std::size_t row = 0; row < p; ++row) a(row, c) = dec.u(row, c) * root;
      for (std::size_t col = 0; col < w.cols(); ++col) b(c, col) = dec.vt(c, col) * root;
    }
    init.transforms.push_back(std::move(a));
    right_factors.push_back(std::move(b));
  }

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> jitter(0.0, config.init_jitter);
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (contiguous_group(i, n, groups) == g) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < per; ++j) {
      // Distinct while the group has enough members, then wrap around.
      Matrix b = right_factors[members[j % members.size()]];
      for (double& v : b.data()) v += jitter(rng);
      init.bases.push_back(std::move(b));
    }
  }
  return init;
}

FactorizeResult factorize_layer(std::span<const Matrix> experts, const FactorizeConfig& config) {
  if (experts.empty()) throw ShapeError("factorize: no experts");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = experts.size();
  const std::size_t p = experts.front().rows();
  config.validate(n, p);
  for (const auto& w : experts) {
    if (w.rows() != p || w.cols() != experts.front().cols()) throw ShapeError("factorize: experts differ in shape");
    if (!w.all_finite()) throw ArgumentError("factorize: expert weights contain non-finite values");
  }

  FactorizeResult result;
  TrainTrace& trace = result.trace;
  const bool matrix_mean = config.mean_mode == MeanMode::kMatrix;

  std::vector<Matrix> target;
  std::optional<Matrix> mean_matrix;
  if (config.normalize) {
    try {
      auto norm = zscore(experts, config.mean_mode);
      target = std::move(norm.weights);
      trace.stats = norm.stats;
      mean_matrix = std::move(norm.mean_matrix);
      trace.normalized = true;
    } catch (const DegenerateInputError& e) {
      std::cerr << "warning: " << e.what() << "; factorizing unnormalized weights\n";
    }
  }
  if (!trace.normalized) {
    target.assign(experts.begin(), experts.end());
    trace.stats = WeightStats{0.0, 1.0};
  }

  BasisProjection params = initialize_factors(target, config);
  std::size_t total = params.logits.size();
  for (const auto& m : params.transforms) total += m.size();
  for (const auto& m : params.bases) total += m.size();
  Adam adam(total, config.adam);

  trace.losses.reserve(config.steps);
  std::size_t above_threshold = 0;
  std::vector<Adam::Block> blocks;
  for (std::size_t step = 0; step < config.steps; ++step) {
    auto lg = loss_and_grads(target, params);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("factorize: non-finite loss at step " + std::to_string(step) +
                         "; try a lower learning rate");
    }
    if (step == 0) trace.initial_loss = lg.loss;
    trace.losses.push_back(lg.loss);

    if (lg.loss > kDivergenceFactor * trace.initial_loss) {
      if (++above_threshold >= kDivergencePatience) {
        throw DivergenceError("factorize: loss above " + std::to_string(kDivergenceFactor) + "x its initial value for " +
                                  std::to_string(kDivergencePatience) + " steps (step " + std::to_string(step) +
                                  "); lower the learning rate",
                              step);
      }
    } else {
      above_threshold = 0;
    }

    if (config.early_stop && step >= kEarlyStopWindow) {
      const double before = trace.losses[step - kEarlyStopWindow];
      if (before > 0.0 && (before - lg.loss) / before < kEarlyStopTolerance) {
        trace.early_stopped = true;
        break;
      }
    }

    blocks.clear();
    for (std::size_t i = 0; i < n; ++i) blocks.push_back({params.transforms[i].data(), lg.d_transforms[i].data()});
    for (std::size_t j = 0; j < params.bases.size(); ++j) blocks.push_back({params.bases[j].data(), lg.d_bases[j].data()});
    blocks.push_back({params.logits.data(), lg.d_logits.data()});
    adam.step(blocks, lr_multiplier(config.schedule, step, config.steps));
  }

  trace.final_loss = objective(target, params);
  if (!std::isfinite(trace.final_loss)) throw NumericError("factorize: non-finite final loss");

  result.projection = fold_sigma(std::move(params), trace.stats);
  if (trace.normalized && (config.keep_mu || matrix_mean)) {
    result.projection.mu = matrix_mean ? *mean_matrix : Matrix(p, experts.front().cols(), trace.stats.mu);
  }

  trace.expert_errors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    trace.expert_errors[i] = frobenius_dist_sq(reconstruct_expert(result.projection, i), experts[i]);
    trace.original_energy += frobenius_sq(experts[i]);
  }
  trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

LrSchedule parse_lr_schedule(std::string_view name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "cosine") return LrSchedule::kCosine;
  throw ArgumentError("unknown learning-rate schedule '" + std::string(name) + "' (expected constant or cosine)");
}

std::string_view to_string(LrSchedule schedule) {
  return schedule == LrSchedule::kCosine ? "cosine" : "constant";
}

double lr_multiplier(LrSchedule schedule, std::size_t step, std::size_t steps) {
  if (schedule == LrSchedule::kConstant || steps == 0) return 1.0;
  const double warmup = std::max<double>(1.0, double(steps) * kWarmupFraction);
  const double ramp = std::min(1.0, double(step + 1) / warmup);
  return ramp * 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / double(steps)));
}

std::uint64_t task_seed(std::uint64_t seed, std::size_t layer, MatrixType type) {
  return seed + 7919ULL * (2 * layer + (type == MatrixType::kGate ? 0 : 1));
}

ConversionResult convert_model(const MoEModel& model, const FactorizeConfig& config, std::size_t jobs,
                               const ProgressFn& progress) {
  model.validate();
  config.validate(model.config.experts, model.config.intermediate);
  const std::size_t layers = model.layers.size();
  const std::size_t tasks = layers * 2;

  std::vector<FactorizeResult> results(tasks);
  std::vector<std::exception_ptr> errors(tasks);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t layer = t / 2;
      const MatrixType type = kFactorizedTypes[t % 2];
      try {
        FactorizeConfig task_config = config;
        task_config.seed = task_seed(config.seed, layer, type);
        results[t] = factorize_layer(model.layers[layer].weights(type), task_config);
        if (progress) {
          progress("layer " + std::to_string(layer) + " " + std::string(to_string(type)) + ": relative error " +
                   std::to_string(results[t].trace.relative_error()) + " in " +
                   std::to_string(results[t].trace.seconds) + " s");
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, tasks);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  for (std::size_t t = 0; t < tasks; ++t) {
    if (errors[t]) {
      rethrow_with_context(errors[t], "layer " + std::to_string(t / 2) + " " +
                                          std::string(to_string(kFactorizedTypes[t % 2])) + ": ");
    }
  }

  ConversionResult out;
  out.model.config = model.config;
  out.model.spec = CompressionSpec{Method::kMobe,
                                   static_cast<std::uint32_t>(config.resolved_rank(model.config.intermediate)),
                                   config.basis_count,
                                   config.groups,
                                   config.activation,
                                   config.normalize && (config.keep_mu || config.mean_mode == MeanMode::kMatrix)};
  for (std::size_t l = 0; l < layers; ++l) {
    CompressedLayer layer;
    for (std::size_t k = 0; k < 2; ++k) {
      layer.projection(kFactorizedTypes[k]) = std::move(results[2 * l + k].projection);
      out.traces.push_back({l, kFactorizedTypes[k], std::move(results[2 * l + k].trace)});
    }
    layer.down = model.layers[l].down;
    layer.router = model.layers[l].router;
    out.model.layers.push_back(std::move(layer));
  }
  // A degenerate layer skips normalization and so carries no bias; give it a
  // zero one when the container stores biases.
  if (out.model.spec.mu_present) {
    for (auto& layer : out.model.layers) {
      for (auto type : kFactorizedTypes) {
        auto& proj = std::get<BasisProjection>(layer.projection(type));
        if (!proj.mu) proj.mu = Matrix(model.config.intermediate, model.config.hidden);
      }
    }
  }
  return out;
}

}  // namespace mobe
