#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "d3g/error.hpp"
#include "d3g/prior.hpp"
#include "d3g/temporal_map.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace d3g;

TEST(ScaleIndex, Endpoints) {
  EXPECT_EQ(scale_index(0, 11), -1.0);
  EXPECT_EQ(scale_index(10, 11), 1.0);
  EXPECT_EQ(scale_index(5, 11), 0.0);
  EXPECT_EQ(scale_index(0, 1), 0.0);
  EXPECT_THROW(scale_index(11, 11), Error);
}

TEST(Gaussian, ReferenceValues) {
  const Vector g = gaussian_weights(11, 5, 0.3);
  // Closed form: (e^{-d²/2σ²} - e^{-1/2σ²}) / (1 - e^{-1/2σ²}), d = 0.2, 0.4.
  const double floor = std::exp(-1.0 / (2 * 0.09));
  const double at6 = (std::exp(-0.04 / 0.18) - floor) / (1 - floor);
  const double at7 = (std::exp(-0.16 / 0.18) - floor) / (1 - floor);
  EXPECT_NEAR(g[6], 0.800, 1e-3);
  EXPECT_NEAR(g[7], 0.409, 1e-3);
  EXPECT_NEAR(g[6], at6, 1e-15);
  EXPECT_NEAR(g[7], at7, 1e-15);
  EXPECT_EQ(g[5], 1.0);
}

TEST(Gaussian, PeakSymmetryMonotone) {
  for (std::size_t n = 2; n <= 24; ++n) {
    for (std::size_t mu = 0; mu < n; ++mu) {
      for (double sigma : {0.1, 0.3, 0.7}) {
        const Vector g = gaussian_weights(n, mu, sigma);
        ASSERT_EQ(g[mu], 1.0);
        for (std::size_t i = mu + 1; i < n; ++i) ASSERT_LT(g[i], g[i - 1]);
        for (std::size_t i = mu; i-- > 0;) ASSERT_LT(g[i], g[i + 1]);
        for (std::size_t t = 1; t <= mu && mu + t < n; ++t) {
          ASSERT_NEAR(g[mu - t], g[mu + t], 1e-12);
        }
        const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
        ASSERT_EQ(*lo, 0.0);
        ASSERT_EQ(*hi, 1.0);
      }
    }
  }
}

TEST(Gaussian, PrefactorCancels) {
  // Independent construction with an arbitrary positive prefactor.
  for (double c : {1e-3, 1.0, 1 / std::sqrt(2 * M_PI * 0.09), 17.0}) {
    Vector raw(13);
    for (std::size_t i = 0; i < 13; ++i) {
      const double d = scale_index(i, 13) - scale_index(4, 13);
      raw[i] = c * std::exp(-d * d / (2 * 0.25 * 0.25));
    }
    const Vector scaled = minmax_normalize(raw);
    const Vector g = gaussian_weights(13, 4, 0.25);
    for (std::size_t i = 0; i < 13; ++i) EXPECT_NEAR(scaled[i], g[i], 1e-12);
  }
}

TEST(Gaussian, InvalidArgs) {
  EXPECT_THROW(gaussian_weights(5, 5, 0.3), Error);
  EXPECT_THROW(gaussian_weights(5, 1, 0.0), Error);
  EXPECT_EQ(gaussian_weights(1, 0, 0.3), (Vector{1.0}));
}

TEST(Grid, CachesIdenticalRows) {
  const GaussianGrid grid(9, 0.4);
  for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(grid.at(c), gaussian_weights(9, c, 0.4));
  EXPECT_EQ(&grid.at(3), &grid.at(3));
}

TEST(Triplet, Examples) {
  const Vector g = gaussian_weights(11, 5, 0.3);
  EXPECT_EQ(triplet_weight(5, 5, g), 1.0);
  EXPECT_NEAR(triplet_weight(4, 8, g), 0.577, 1e-3);
  EXPECT_NEAR(triplet_weight(4, 8, g), (g[4] + g[8] + g[6]) / 3, 1e-15);
  EXPECT_NEAR(g[8], 0.132, 1e-3);
  EXPECT_EQ(midpoint_weight(5, 5, g), 1.0);
  EXPECT_NEAR(midpoint_weight(4, 8, g), 0.800, 1e-3);
}

TEST(Triplet, PenalisesSymmetricWidening) {
  for (std::size_t n = 2; n <= 32; ++n) {
    for (double sigma : {0.2, 0.3, 0.6, 1.0}) {
      const GaussianGrid grid(n, sigma);
      for (std::size_t g = 0; g < n; ++g) {
        double prev = triplet_weight(g, g, grid.at(g));
        for (std::size_t t = 1; t <= g && g + t < n; ++t) {
          const double w = triplet_weight(g - t, g + t, grid.at(g));
          ASSERT_LT(w, prev);
          ASSERT_EQ(midpoint_weight(g - t, g + t, grid.at(g)), 1.0);
          prev = w;
        }
      }
    }
  }
}

TEST(Triplet, NarrowSigmaSaturatesInDoubles) {
  // At σ = 0.1 the endpoint terms of wide moments drop below 1e-16 next to
  // the midpoint's 1/3, so the decrease is only visible as non-increase.
  const GaussianGrid grid(32, 0.1);
  const std::size_t g = 15;
  double prev = 1.0;
  bool saturated = false;
  for (std::size_t t = 1; t <= g; ++t) {
    const double w = triplet_weight(g - t, g + t, grid.at(g));
    ASSERT_LE(w, prev);
    saturated = saturated || w == prev;
    prev = w;
  }
  EXPECT_TRUE(saturated);
  EXPECT_EQ(prev, 1.0 / 3.0);
}

TEST(Triplet, RangeAndUniquePeak) {
  const std::size_t n = 12;
  const GaussianGrid grid(n, 0.37);
  for (std::size_t g = 0; g < n; ++g) {
    const Vector w = moment_weights(grid.at(g), WeightMode::triplet);
    ASSERT_EQ(w.size(), num_moments(n));
    for (std::size_t z = 0; z < w.size(); ++z) {
      ASSERT_GE(w[z], 0.0);
      ASSERT_LE(w[z], 1.0);
      ASSERT_EQ(w[z] == 1.0, unflatten(z, n) == (Moment{g, g}));
    }
  }
}

TEST(Relevance, Examples) {
  const Matrix clips = Matrix::from_rows({{1, 0}, {0, 1}, {-1, 0}, {2, 0}});
  const Vector r = relevance(clips, 0);
  EXPECT_EQ(r, (Vector{1, 0, -1, 1}));
  EXPECT_THROW(relevance(Matrix::from_rows({{1, 0}, {0, 0}}), 0), Error);
  EXPECT_THROW(relevance(clips, 4), Error);
}

TEST(Momentum, Examples) {
  RelevanceState s;
  EXPECT_FALSE(s.initialized);
  momentum_update(s, Vector{0.5, -0.2}, 0.7);
  EXPECT_TRUE(s.initialized);
  EXPECT_EQ(s.smoothed, (Vector{0.5, -0.2}));
  momentum_update(s, Vector{1.0, 0.9}, 0.0);
  EXPECT_EQ(s.smoothed, (Vector{0.5, -0.2}));
  momentum_update(s, Vector{1.0, 0.9}, 0.7);
  EXPECT_NEAR(s.smoothed[0], 0.85, 1e-15);
  EXPECT_THROW(momentum_update(s, Vector{1.0}, 0.7), Error);
}

TEST(Momentum, GeometricContraction) {
  RelevanceState s;
  const Vector start{0.1, -0.5, 0.9};
  const Vector target{0.8, 0.2, -0.3};
  momentum_update(s, start, 0.3);
  for (int t = 1; t <= 20; ++t) {
    momentum_update(s, target, 0.3);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(std::abs(s.smoothed[i] - target[i]),
                  std::pow(0.7, t) * std::abs(start[i] - target[i]), 1e-12);
    }
  }
}

TEST(Mask, Examples) {
  EXPECT_EQ(center_mask(Vector{0.95, 0.8, 0.92}, 0.9), (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_EQ(center_mask(Vector{0.5, 0.6}, 0.5), (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(center_mask(Vector{0.9}, 0.9), (std::vector<std::uint8_t>{1}));
}

TEST(Mask, GlanceAlwaysMasked) {
  Rng rng(4);
  const Matrix clips = test::random_matrix(10, 5, rng);
  for (std::size_t g = 0; g < 10; ++g) {
    EXPECT_EQ(center_mask(relevance(clips, g), 1.0)[g], 1);
  }
}

TEST(Dga, SingleCentreReproducesGaussian) {
  for (std::size_t g = 0; g < 15; ++g) {
    const GaussianGrid grid(15, 0.3);
    std::vector<std::uint8_t> mask(15, 0);
    mask[g] = 1;
    const Vector ones(15, 1.0);
    const Vector raw = dga_aggregate(ones, mask, grid, true);
    const Vector out = dga_weights(ones, mask, grid, DgaConfig{});
    for (std::size_t i = 0; i < 15; ++i) {
      EXPECT_NEAR(raw[i], grid.at(g)[i], 1e-12);
      EXPECT_NEAR(out[i], grid.at(g)[i], 1e-12);
    }
  }
}

TEST(Dga, TwoSeparatedCentresGiveTwoPeaks) {
  const std::size_t n = 32;
  const GaussianGrid grid(n, 0.1);
  std::vector<std::uint8_t> mask(n, 0);
  mask[6] = mask[25] = 1;
  const Vector out = dga_weights(Vector(n, 1.0), mask, grid, DgaConfig{});
  for (std::size_t z : {6u, 25u}) {
    EXPECT_GT(out[z], out[z - 1]);
    EXPECT_GT(out[z], out[z + 1]);
  }
  EXPECT_LT(out[15], 0.5 * out[6]);
}

TEST(Dga, RangeAfterClampAndRenormalise) {
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.index(20);
    const Vector r = test::random_vector(n, rng);
    const std::size_t g = rng.index(n);
    Vector smoothed = r;
    smoothed[g] = 1.0;
    const auto mask = center_mask(smoothed, 0.5);
    for (bool literal : {true, false}) {
      DgaConfig cfg;
      cfg.literal_relevance = literal;
      const Vector out = dga_weights(smoothed, mask, GaussianGrid(n, 0.3), cfg);
      for (double v : out) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
      cfg.renormalize = false;
      const Vector raw = dga_weights(smoothed, mask, GaussianGrid(n, 0.3), cfg);
      for (double v : raw) ASSERT_GE(v, 0.0);
    }
  }
}

TEST(Dga, LiteralAndCentreRelevanceDiffer) {
  const GaussianGrid grid(5, 0.5);
  const Vector smoothed{1.0, 0.95, 0.2, -0.4, 0.1};
  const std::vector<std::uint8_t> mask{1, 1, 0, 0, 0};
  const Vector lit = dga_aggregate(smoothed, mask, grid, true);
  const Vector alt = dga_aggregate(smoothed, mask, grid, false);
  EXPECT_LT(lit[3], 0.0); // negative relevance carried through
  EXPECT_GT(alt[3], 0.0);
  const Vector ref_lit = oracle::dga(smoothed, mask, 5, 0.5, true);
  const Vector ref_alt = oracle::dga(smoothed, mask, 5, 0.5, false);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(lit[i], ref_lit[i], 1e-12);
    EXPECT_NEAR(alt[i], ref_alt[i], 1e-12);
  }
}

TEST(Dga, EmptyMaskThrows) {
  const GaussianGrid grid(4, 0.3);
  const std::vector<std::uint8_t> mask(4, 0);
  try {
    dga_weights(Vector(4, 1.0), mask, grid, DgaConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_input);
  }
}
