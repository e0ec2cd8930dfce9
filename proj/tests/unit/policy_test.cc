// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "aquila/errors.h"
#include "aquila/policy.h"
#include "aquila/random.h"

namespace aquila {
namespace {

const Vector kSample{0.3, -0.1, 0.2};

TEST(AquilaLevel, Examples) {
  EXPECT_EQ(aquila_level(Vector{0.7, -0.7, 0.7, 0.7}), 1);
  EXPECT_EQ(aquila_level(kSample), 1);
  EXPECT_EQ(aquila_level(Vector::zeros(3)), 1);
}

TEST(AquilaLevel, SpikyInnovationGetsMoreBits) {
  // R*sqrt(d)/||v|| = sqrt(d) for a single spike: d = 1024 gives log2(33).
  Vector v(1024);
  v[17] = -3.0;
  EXPECT_EQ(aquila_level(v), 5);
  EXPECT_EQ(aquila_ceil_level(v), 6);
  EXPECT_EQ(aquila_level(v, 4), 4);
}

TEST(AquilaLevel, ScaleInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Vector v(1 + rng.below(50));
    for (std::size_t i = 0; i < v.dim(); ++i) v[i] = rng.normal() * std::pow(rng.uniform(), 4);
    const int b = aquila_level(v);
    for (double s : {0.125, 4.0, 1024.0}) EXPECT_EQ(aquila_level(scale(s, v)), b);
  }
}

TEST(OptimalTau, Examples) {
  EXPECT_DOUBLE_EQ(optimal_tau(Vector{2, -2, 2}), 1.0);
  EXPECT_NEAR(optimal_tau(kSample), 0.72008, 1e-5);
  EXPECT_DOUBLE_EQ(optimal_tau(Vector{0, 0, 5, 0}), 0.5);
  EXPECT_THROW(optimal_tau(Vector::zeros(2)), DegenerateInput);
}

TEST(DeviationObjective, Examples) {
  // tau* = 1/3 exactly for a spike in d = 9.
  Vector v(9);
  v[4] = 2.0;
  EXPECT_NEAR(deviation_objective(v, 2), 0.0, 1e-15);
  EXPECT_NEAR(deviation_objective(kSample, 2), 0.040386, 1e-6);
  EXPECT_LT(deviation_objective(kSample, 1), deviation_objective(kSample, 2));
}

TEST(AquilaLevel, WithinOneOfBruteForceArgmin) {
  Rng rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t d = 1 + rng.below(128);
    Vector v(d);
    const double sparsity = rng.uniform();
    for (std::size_t i = 0; i < d; ++i) {
      if (rng.uniform() < sparsity) v[i] = rng.normal();
    }
    if (norm2(v) == 0.0) v[0] = 1.0;
    int best = 1;
    for (int b = 2; b <= kMaxBits; ++b) {
      if (deviation_objective(v, b) < deviation_objective(v, best)) best = b;
    }
    const int level = aquila_level(v);
    ASSERT_GE(level, 1);
    ASSERT_LE(std::abs(level - best), 1) << "d " << d;
  }
}

TEST(AdaQuantFl, Examples) {
  EXPECT_EQ(adaquantfl_level(3.0, 3.0, 5), 5);
  EXPECT_EQ(adaquantfl_level(2.0, 0.5, 2), 4);
  bool capped = false;
  EXPECT_EQ(adaquantfl_level(100.0, 1e-4, 4, kMaxBits, &capped), 32);
  EXPECT_TRUE(capped);
  EXPECT_EQ(adaquantfl_level(1.0, 100.0, 2, kMaxBits, &capped), 1);
  EXPECT_FALSE(capped);
  EXPECT_THROW(adaquantfl_level(0.0, 1.0, 2), NumericError);
  EXPECT_THROW(adaquantfl_level(1.0, -1.0, 2), NumericError);
}

TEST(AdaQuantFl, NonDecreasingAsLossFalls) {
  int prev = 0;
  for (double fk = 10.0; fk > 1e-6; fk *= 0.7) {
    const int b = adaquantfl_level(10.0, fk, 2);
    EXPECT_GE(b, prev);
    prev = b;
  }
}

QuantizationError error_with_energy(double energy) {
  return {Vector{std::sqrt(energy)}};
}

TEST(ShouldSkip, Examples) {
  const QuantizedInnovation zero = encode(Vector::zeros(1), 1);
  EXPECT_TRUE(should_skip(zero, {Vector::zeros(1)}, 0.0, {0.0, 0.1}));
  EXPECT_TRUE(should_skip(zero, {Vector::zeros(1)}, 3.0, {2.0, 0.1}));

  EXPECT_FALSE(should_skip(zero, error_with_energy(0.1), 5.0, {0.0, 0.1}));

  const SkipPolicy p{0.25, 0.1};
  EXPECT_TRUE(should_skip(zero, error_with_energy(0.9), 0.04, p));
  EXPECT_FALSE(should_skip(zero, error_with_energy(1.1), 0.04, p));
}

TEST(ShouldSkip, CountsDecodedInnovation) {
  // decode = (1, -1), energy 2 plus error 0.25.
  const QuantizedInnovation q = encode(Vector{1.0, -1.0}, 1);
  const QuantizationError e{Vector{0.5, 0.0}};
  EXPECT_TRUE(should_skip(q, e, 2.25, {1.0, 1.0}));
  EXPECT_FALSE(should_skip(q, e, 2.2, {1.0, 1.0}));
}

TEST(ParsePolicy, RoundTrip) {
  for (const char* text : {"aquila", "aquila-ceil", "fixed:8", "fixed:32-full", "adaquantfl:2"}) {
    EXPECT_EQ(to_string(parse_policy(text)), text);
  }
  EXPECT_FALSE(parse_policy("fixed:32-full").lazy);
  EXPECT_TRUE(parse_policy("fixed:4").lazy);
  EXPECT_EQ(parse_policy("fixed:4").level, LevelPolicy::fixed(4));
}

TEST(ParsePolicy, Rejects) {
  for (const char* text : {"", "AQUILA", "fixed:", "fixed:0", "fixed:33", "fixed:x", "adaquantfl",
                           "adaquantfl:2-full", "fixed:4-lazy"}) {
    EXPECT_THROW(parse_policy(text), ConfigError) << text;
  }
  EXPECT_THROW(LevelPolicy::fixed(0), PolicyError);
}

TEST(SelectLevel, Dispatch) {
  const LossContext losses{2.0, 0.5};
  EXPECT_EQ(select_level(LevelPolicy::fixed(8), kSample, losses).bits, 8);
  EXPECT_EQ(select_level(LevelPolicy::aquila(), kSample, losses).bits, 1);
  EXPECT_EQ(select_level(LevelPolicy::aquila_ceil(), kSample, losses).bits, 2);
  EXPECT_EQ(select_level(LevelPolicy::adaquantfl(2), kSample, losses).bits, 4);
}

}  // namespace
}  // namespace aquila
