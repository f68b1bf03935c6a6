#include <gtest/gtest.h>

#include "mobe/basis.hpp"
#include "mobe/errors.hpp"
#include "mobe/synthetic.hpp"
#include "oracles.hpp"

namespace mobe {
namespace {

SyntheticOptions planted(std::uint64_t seed) {
  SyntheticOptions o;
  o.mode = SyntheticMode::kPlanted;
  o.seed = seed;
  o.basis_count = 2;
  o.rank = 3;
  return o;
}

TEST(Synthetic, DeterministicPerSeed) {
  const MoEConfig c{2, 4, 6, 3, 2, std::nullopt};
  EXPECT_EQ(generate_synthetic(c, planted(5)).model, generate_synthetic(c, planted(5)).model);
  EXPECT_NE(generate_synthetic(c, planted(5)).model, generate_synthetic(c, planted(6)).model);
  SyntheticOptions g;
  g.seed = 9;
  EXPECT_EQ(generate_synthetic(c, g).model, generate_synthetic(c, g).model);
  EXPECT_FALSE(generate_synthetic(c, g).truth.has_value());
}

TEST(Synthetic, GaussianStdIsRespected) {
  SyntheticOptions g;
  g.weight_std = 0.023;
  const auto model = generate_synthetic(MoEConfig{1, 8, 64, 32, 2, std::nullopt}, g).model;
  const auto [mean, sd] = testing::two_pass_stats(model.layers[0].gate);
  EXPECT_NEAR(mean, 0.0, 0.001);
  EXPECT_NEAR(sd, 0.023, 0.001);
}

TEST(Synthetic, PlantedTruthReproducesWeights) {
  const MoEConfig c{2, 5, 7, 4, 2, std::nullopt};
  for (auto act : {Activation::kSilu, Activation::kNone, Activation::kSigmoid}) {
    auto o = planted(11);
    o.activation = act;
    o.groups = 2;
    o.basis_count = 4;
    const auto s = generate_synthetic(c, o);
    ASSERT_TRUE(s.truth.has_value());
    EXPECT_NO_THROW(s.truth->validate());
    for (std::size_t l = 0; l < 2; ++l) {
      EXPECT_EQ(s.truth->layers[l].down, s.model.layers[l].down);
      EXPECT_EQ(s.truth->layers[l].router, s.model.layers[l].router);
      for (auto type : kFactorizedTypes) {
        const auto recon = materialize(s.truth->layers[l].projection(type));
        for (std::size_t i = 0; i < 5; ++i) EXPECT_LT(max_abs_diff(recon[i], s.model.layers[l].weights(type)[i]), 1e-12);
        // Mixture weights lie on the simplex.
        const auto& proj = std::get<BasisProjection>(s.truth->layers[l].projection(type));
        for (std::size_t i = 0; i < 5; ++i) {
          double total = 0.0;
          for (double a : softmax(proj.logits.row(i))) total += a;
          EXPECT_NEAR(total, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(Synthetic, RejectsBadPlantedOptions) {
  const MoEConfig c{1, 4, 6, 3, 2, std::nullopt};
  auto o = planted(1);
  o.basis_count = 4;
  EXPECT_THROW(generate_synthetic(c, o), ArgumentError);
  o = planted(1);
  o.rank = 4;
  EXPECT_THROW(generate_synthetic(c, o), ArgumentError);
  o = planted(1);
  o.groups = 3;
  EXPECT_THROW(generate_synthetic(c, o), ArgumentError);
  SyntheticOptions g;
  g.weight_std = 0.0;
  EXPECT_THROW(generate_synthetic(c, g), ArgumentError);
  EXPECT_THROW(parse_synthetic_mode("uniform"), ArgumentError);
  EXPECT_EQ(parse_synthetic_mode("planted"), SyntheticMode::kPlanted);
}

}  // namespace
}  // namespace mobe
