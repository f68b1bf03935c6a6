#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "mobe/analyzer.hpp"
#include "mobe/baselines.hpp"
#include "mobe/checkpoint.hpp"
#include "mobe/errors.hpp"
#include "mobe/synthetic.hpp"
#include "oracles.hpp"

namespace mobe {
namespace {

TEST(EffectiveRank, EqualValuesNeedAllOfThem) {
  const std::vector<double> s(20, 1.0);
  // 19/20 = 0.95 is not strictly above the threshold.
  EXPECT_EQ(effective_rank(Matrix::diagonal(s)), 20u);
  EXPECT_EQ(effective_rank_from_singular_values(s), 20u);
}

TEST(EffectiveRank, DiagonalExamples) {
  const std::vector<double> a{3, 2, 1};  // energies 9/14, 13/14, 1
  EXPECT_EQ(effective_rank(Matrix::diagonal(a)), 3u);
  EXPECT_EQ(effective_rank(Matrix::diagonal(a), 0.9), 2u);
  EXPECT_EQ(effective_rank(Matrix::diagonal(a), 0.5), 1u);
  const std::vector<double> b{10, 1, 1, 1};  // 100/103 > 0.95
  EXPECT_EQ(effective_rank(Matrix::diagonal(b)), 1u);
}

TEST(EffectiveRank, ZeroMatrixIsDegenerate) {
  EXPECT_THROW(effective_rank(Matrix(3, 3)), DegenerateInputError);
}

TEST(EffectiveRank, MonotoneInThresholdAndScaleInvariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = testing::random_matrix(rng, 12, 9);
    // Give the spectrum a spread so thresholds matter.
    for (std::size_t c = 0; c < 9; ++c)
      for (std::size_t r = 0; r < 12; ++r) m(r, c) *= std::pow(0.6, double(c));
    std::size_t last = 0;
    for (double t = 0.05; t < 1.0; t += 0.05) {
      const auto re = effective_rank(m, t);
      EXPECT_GE(re, last);
      last = re;
      for (double c : {-3.0, 1e-3, 250.0}) EXPECT_EQ(effective_rank(c * m, t), re);
    }
  }
}

TEST(SvdThreshold, KnownShapes) {
  EXPECT_NEAR(svd_threshold(7168, 2048), 7168.0 * 2048.0 / 9216.0, 1e-9);
  EXPECT_NEAR(svd_threshold(7168, 2048), 1593.0, 0.5);
  EXPECT_NEAR(svd_threshold(48, 128), 48.0 * 128.0 / 176.0, 1e-12);
  EXPECT_THROW(svd_threshold(0, 4), ArgumentError);
}

TEST(Gamma, TableExample) {
  EXPECT_DOUBLE_EQ(compression_gamma(16, 128, 48, 48, 4), 0.75);
  MoEConfig c{1, 16, 128, 48, 2, std::nullopt};
  const auto acc = param_account(c, 48, 4);
  EXPECT_EQ(acc.moe.total, 294912u);
  EXPECT_EQ(acc.mobe.total, 221184u);
  EXPECT_EQ(acc.moe.activated, 3u * 2 * 128 * 48);
  EXPECT_EQ(acc.mobe.activated, 2u * 128 * 48 + 2u * 2 * 48 * 48 + 2u * 2 * 48 * 128);
  EXPECT_DOUBLE_EQ(double(acc.mobe.total) / double(acc.moe.total), acc.gamma);
}

TEST(Gamma, LastTermBoundAtEquality) {
  // 2mr/(3np) with n = 128, m = 16, r = p.
  const std::size_t n = 128, m = 16, p = 64, d = 96;
  const double full = compression_gamma(n, d, p, p, m);
  const double without = compression_gamma(n, d, p, p, 0);
  EXPECT_NEAR(full - without, 1.0 / 12.0, 1e-15);
}

TEST(Gamma, NoBasisSharingExceedsOne) {
  // m = n, r = p: 1/3 + 2/3 + 2r/(3d) > 1.
  EXPECT_GT(compression_gamma(8, 32, 16, 16, 8), 1.0);
}

TEST(ParamAccount, ReducedExpertsAndValidation) {
  MoEConfig c{2, 8, 16, 8, 4, std::nullopt};
  const auto acc = param_account(c, 8, 2, 2);
  EXPECT_EQ(acc.activated_experts, 2u);
  EXPECT_EQ(acc.mobe_dagger.total, acc.mobe.total);
  EXPECT_LT(acc.mobe_dagger.activated, acc.mobe.activated);
  EXPECT_THROW(param_account(c, 8, 2, 5), ArgumentError);
  EXPECT_THROW(param_account(c, 8, 2, 0), ArgumentError);
}

// Formula counts against what the container actually stores.
TEST(ParamAccount, MatchesSerializedElementCounts) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    std::uniform_int_distribution<std::uint32_t> small(2, 6);
    MoEConfig c{small(rng) / 2, small(rng) + 2, small(rng) + 3, small(rng), 1, std::nullopt};
    c.top_k = std::min<std::uint32_t>(2, c.experts);
    SyntheticOptions o;
    o.mode = SyntheticMode::kPlanted;
    o.seed = trial;
    o.basis_count = 2;
    o.rank = std::min(c.intermediate, c.hidden);
    const auto synth = generate_synthetic(c, o);
    const auto acc = param_account(c, o.rank, o.basis_count);
    EXPECT_EQ(acc.moe.total, expert_parameter_count(synth.model));
    EXPECT_EQ(acc.mobe.total, expert_parameter_count(*synth.truth));

    // The payload holds exactly the counted elements plus router and logits.
    std::ostringstream moe_bytes, mobe_bytes;
    write_checkpoint(moe_bytes, synth.model);
    write_compressed(mobe_bytes, *synth.truth);
    const std::uint64_t routers = std::uint64_t(c.layers) * c.experts * c.hidden;
    const std::uint64_t logits = 2ull * c.layers * c.experts * o.basis_count;
    EXPECT_EQ(moe_bytes.str().size(), 4 + 4 + 40 + 4 * (acc.moe.total + routers));
    EXPECT_EQ(mobe_bytes.str().size(), 4 + 4 + 40 + 4 + 4 * (acc.mobe.total + routers + logits));
  }
}

MoEModel small_model(std::uint64_t seed) {
  SyntheticOptions o;
  o.seed = seed;
  return generate_synthetic(MoEConfig{2, 4, 10, 6, 2, std::nullopt}, o).model;
}

TEST(Reports, RankReportRowsAndBounds) {
  const auto model = small_model(1);
  const auto rows = rank_report(model);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].type, "gate");
  EXPECT_EQ(rows[2].type, "down");
  for (const auto& r : rows) {
    EXPECT_LE(r.min, r.mean);
    EXPECT_LE(r.mean, r.max);
    EXPECT_LE(r.max, 6u);
    EXPECT_NEAR(r.threshold, 60.0 / 16.0, 1e-12);
  }
}

TEST(Reports, MseIsZeroForIdenticalVariantAndFullRankSvd) {
  const auto model = small_model(2);
  const auto svd = compress_baseline(model, BaselineConfig{Method::kSvd, 6, 0, {}});
  const std::vector<ModelVariant> variants{{"same", model}, {"svd", svd.model}};
  const auto rows = mse_report(model, variants);
  ASSERT_EQ(rows.size(), 2u * 2 * 2);
  for (const auto& r : rows) {
    if (r.method == "same") EXPECT_EQ(r.mse, 0.0);
    else EXPECT_LT(r.mse, 1e-12);
  }
}

TEST(Reports, MseMatchesDirectSum) {
  const auto model = small_model(3);
  const auto svd = compress_baseline(model, BaselineConfig{Method::kSvd, 2, 0, {}});
  const std::vector<ModelVariant> variants{{"svd", svd.model}};
  const auto rows = mse_report(model, variants);
  for (const auto& r : rows) {
    const auto approx = materialize(svd.model.layers[r.layer].projection(r.type));
    double frob = 0.0;
    for (std::size_t i = 0; i < approx.size(); ++i)
      frob += testing::naive_frobenius_sq(model.layers[r.layer].weights(r.type)[i] - approx[i]);
    EXPECT_NEAR(r.frob_sq, frob, 1e-12 * frob);
    EXPECT_NEAR(r.mse, frob / (4.0 * 6 * 10), 1e-12 * frob);
  }
}

TEST(Reports, ShapeMismatchIsRejected) {
  const auto model = small_model(4);
  SyntheticOptions o;
  const auto other = generate_synthetic(MoEConfig{2, 4, 12, 6, 2, std::nullopt}, o).model;
  const std::vector<ModelVariant> variants{{"other", other}};
  EXPECT_THROW(mse_report(model, variants), ShapeError);
  EXPECT_THROW(param_report(model, variants), ShapeError);
}

TEST(Reports, ParamReportHasDaggerRow) {
  SyntheticOptions o;
  o.mode = SyntheticMode::kPlanted;
  o.basis_count = 2;
  o.rank = 6;
  const auto synth = generate_synthetic(MoEConfig{2, 4, 10, 6, 2, std::nullopt}, o);
  const std::vector<ModelVariant> variants{{"mobe", *synth.truth}};
  const auto rows = param_report(synth.model, variants, 1u);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].method, "moe");
  EXPECT_EQ(rows[2].method, "mobe-dagger");
  EXPECT_EQ(rows[1].total, rows[2].total);
  EXPECT_GT(rows[1].activated, rows[2].activated);
  EXPECT_DOUBLE_EQ(rows[1].gamma, double(rows[1].total) / double(rows[0].total));
}

TEST(Reports, CsvHeaders) {
  std::ostringstream rank, mse, param;
  write_rank_csv(rank, std::vector<RankRow>{});
  write_mse_csv(mse, std::vector<MseRow>{});
  write_param_csv(param, std::vector<ParamRow>{});
  EXPECT_EQ(rank.str(), "layer,type,mean_re,min_re,max_re,threshold\n");
  EXPECT_EQ(mse.str(), "layer,type,method,mse,frob_sq\n");
  EXPECT_EQ(param.str(), "method,total,activated,gamma\n");
}

}  // namespace
}  // namespace mobe
