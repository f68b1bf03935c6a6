#include <gtest/gtest.h>

#include <random>

#include "mobe/baselines.hpp"
#include "mobe/errors.hpp"
#include "mobe/synthetic.hpp"
#include "oracles.hpp"

namespace mobe {
namespace {

using testing::eckart_young;
using testing::random_experts;
using testing::relative_difference;

TEST(Baselines, SvdErrorIsEckartYoung) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto experts = random_experts(rng, 4, 7, 9);
    for (std::size_t r : {1u, 3u, 6u}) {
      const auto res = svd_per_expert(experts, r);
      double expected = 0.0;
      for (std::size_t i = 0; i < experts.size(); ++i) {
        const double e = eckart_young(experts[i], r);
        EXPECT_LT(relative_difference(res.expert_errors[i], e), 1e-9);
        expected += e;
      }
      EXPECT_LT(relative_difference(res.squared_error, expected), 1e-9);
    }
  }
}

TEST(Baselines, FullRankSvdIsExact) {
  std::mt19937_64 rng(22);
  const auto experts = random_experts(rng, 3, 5, 8);
  EXPECT_LT(svd_per_expert(experts, 5).squared_error, 1e-20);
}

TEST(Baselines, MolaeErrorIsStackedEckartYoung) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const auto experts = random_experts(rng, 5, 4, 10);
    for (std::size_t groups : {1u, 2u, 5u}) {
      const auto res = molae_compress(experts, groups, 3);
      double expected = 0.0;
      const auto assign = contiguous_grouping(5, groups);
      for (std::size_t g = 0; g < groups; ++g) {
        std::vector<Matrix> members;
        for (std::size_t i = 0; i < 5; ++i)
          if (assign[i] == g) members.push_back(experts[i]);
        expected += eckart_young(vstack(members), 3);
      }
      EXPECT_LT(relative_difference(res.squared_error, expected), 1e-9);
      EXPECT_EQ(res.projection.right.size(), groups);
    }
  }
}

TEST(Baselines, MolaeWithOneExpertPerGroupEqualsSvd) {
  std::mt19937_64 rng(24);
  const auto experts = random_experts(rng, 4, 6, 6);
  EXPECT_LT(relative_difference(molae_compress(experts, 4, 2).squared_error, svd_per_expert(experts, 2).squared_error),
            1e-12);
}

TEST(Baselines, MolaeCustomGroupingAndErrors) {
  std::mt19937_64 rng(25);
  const auto experts = random_experts(rng, 4, 3, 5);
  const GroupingFn alternate = [](std::size_t n, std::size_t) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i % 2;
    return out;
  };
  const auto res = molae_compress(experts, 2, 2, alternate);
  EXPECT_EQ(res.projection.right_index, (std::vector<std::size_t>{0, 1, 0, 1}));
  const std::vector<Matrix> even{experts[0], experts[2]}, odd{experts[1], experts[3]};
  EXPECT_LT(relative_difference(res.squared_error, eckart_young(vstack(even), 2) + eckart_young(vstack(odd), 2)), 1e-9);

  const GroupingFn empty_group = [](std::size_t n, std::size_t) { return std::vector<std::size_t>(n, 0); };
  EXPECT_THROW(molae_compress(experts, 2, 2, empty_group), ArgumentError);
  EXPECT_THROW(molae_compress(experts, 5, 2), ArgumentError);
  EXPECT_THROW(molae_compress(experts, 0, 2), ArgumentError);
}

TEST(Baselines, D2moeErrorIsDeltaEckartYoung) {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    const auto experts = random_experts(rng, 4, 6, 5);
    const auto res = d2moe_compress(experts, 2);
    Matrix mean(6, 5);
    for (const auto& w : experts) mean += w * 0.25;
    double expected = 0.0;
    for (const auto& w : experts) expected += eckart_young(w - mean, 2);
    EXPECT_LT(relative_difference(res.squared_error, expected), 1e-9);
    ASSERT_TRUE(res.projection.shared.has_value());
    EXPECT_LT(max_abs_diff(*res.projection.shared, mean), 1e-14);
  }
}

TEST(Baselines, D2moeWeightedMean) {
  std::mt19937_64 rng(27);
  const auto experts = random_experts(rng, 3, 4, 4);
  const std::vector<double> w{1.0, 0.0, 3.0};
  const auto res = d2moe_compress(experts, 1, w);
  const Matrix mean = experts[0] * 0.25 + experts[2] * 0.75;
  EXPECT_LT(max_abs_diff(*res.projection.shared, mean), 1e-14);
  const std::vector<double> bad{1.0, -1.0, 1.0}, zero{0.0, 0.0, 0.0}, short_list{1.0};
  EXPECT_THROW(d2moe_compress(experts, 1, bad), ArgumentError);
  EXPECT_THROW(d2moe_compress(experts, 1, zero), ArgumentError);
  EXPECT_THROW(d2moe_compress(experts, 1, short_list), ArgumentError);
}

TEST(Baselines, ReportedErrorMatchesMaterializedFactors) {
  std::mt19937_64 rng(28);
  const auto experts = random_experts(rng, 4, 5, 7);
  for (const auto& res : {svd_per_expert(experts, 2), molae_compress(experts, 2, 2), d2moe_compress(experts, 2)}) {
    const auto recon = materialize(res.projection);
    for (std::size_t i = 0; i < experts.size(); ++i) {
      EXPECT_NEAR(res.expert_errors[i], testing::naive_frobenius_sq(recon[i] - experts[i]), 1e-10);
    }
  }
}

TEST(Baselines, RankValidation) {
  std::mt19937_64 rng(29);
  const auto experts = random_experts(rng, 2, 3, 5);
  EXPECT_THROW(svd_per_expert(experts, 0), ArgumentError);
  EXPECT_THROW(svd_per_expert(experts, 4), ArgumentError);
  EXPECT_THROW(svd_per_expert(std::vector<Matrix>{}, 1), ShapeError);
  const std::vector<Matrix> ragged{Matrix(3, 5), Matrix(3, 4)};
  EXPECT_THROW(svd_per_expert(ragged, 1), ShapeError);
}

TEST(Baselines, ParameterCounts) {
  EXPECT_EQ(svd_parameter_count(16, 48, 128, 10), 16u * 10 * 176);
  EXPECT_EQ(molae_parameter_count(16, 48, 128, 4, 10), 16u * 48 * 10 + 4u * 10 * 128);
  EXPECT_EQ(d2moe_parameter_count(16, 48, 128, 10), 48u * 128 + 16u * 10 * 176);
  EXPECT_EQ(mobe_parameter_count(16, 48, 128, 48, 4), 16u * 48 * 48 + 4u * 48 * 128);

  std::mt19937_64 rng(30);
  const auto experts = random_experts(rng, 4, 5, 7);
  EXPECT_EQ(svd_per_expert(experts, 2).parameter_count, svd_parameter_count(4, 5, 7, 2));
}

TEST(Baselines, EqualBudgetRankIsSmallestCoveringRank) {
  const std::size_t budget = mobe_parameter_count(16, 48, 128, 48, 4);
  const auto r = equal_budget_rank(Method::kSvd, 16, 48, 128, budget);
  EXPECT_GE(svd_parameter_count(16, 48, 128, r), budget);
  EXPECT_LT(svd_parameter_count(16, 48, 128, r - 1), budget);
  EXPECT_EQ(equal_budget_rank(Method::kSvd, 2, 3, 4, 1u << 30), 3u);
  EXPECT_THROW(equal_budget_rank(Method::kMobe, 2, 3, 4, 10), ArgumentError);
}

TEST(Baselines, CompressBaselineCopiesDownAndRouter) {
  SyntheticOptions o;
  o.seed = 3;
  const auto model = generate_synthetic(MoEConfig{2, 4, 6, 5, 2, std::nullopt}, o).model;
  for (auto method : {Method::kSvd, Method::kMolae, Method::kD2moe}) {
    const auto conv = compress_baseline(model, BaselineConfig{method, 2, 2, {}});
    EXPECT_EQ(conv.results.size(), 4u);
    EXPECT_EQ(conv.model.spec.method, method);
    for (std::size_t l = 0; l < 2; ++l) {
      EXPECT_EQ(conv.model.layers[l].down, model.layers[l].down);
      EXPECT_EQ(conv.model.layers[l].router, model.layers[l].router);
    }
  }
  EXPECT_THROW(compress_baseline(model, BaselineConfig{Method::kMobe, 2, 0, {}}), ArgumentError);
}

}  // namespace
}  // namespace mobe
