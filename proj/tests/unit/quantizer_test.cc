// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdint>

#include <gtest/gtest.h>

#include "aquila/errors.h"
#include "aquila/quantizer.h"
#include "aquila/random.h"

namespace aquila {
namespace {

TEST(Granularity, Values) {
  EXPECT_DOUBLE_EQ(granularity(1), 1.0);
  EXPECT_DOUBLE_EQ(granularity(2), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(granularity(32), 1.0 / 4294967295.0);
  EXPECT_EQ(max_code(1), 1u);
  EXPECT_EQ(max_code(32), 4294967295u);
  EXPECT_THROW(granularity(0), PolicyError);
  EXPECT_THROW(granularity(33), PolicyError);
}

TEST(Encode, LowerLatticePoint) {
  const QuantizedInnovation q = encode(Vector{-1.0, 1.0}, 2);
  EXPECT_EQ(q.range, 1.0);
  EXPECT_EQ(q.codes[0], 0u);
  EXPECT_EQ(decode(q)[0], -1.0);
  EXPECT_EQ(quantization_error(Vector{-1.0, 1.0}, q).epsilon[0], 0.0);
}

TEST(Encode, HalfWithTwoBits) {
  // R = 1 from the second coordinate; (0.5 + 1) / (2/3) + 0.5 = 2.75.
  const Vector v{0.5, -1.0};
  const QuantizedInnovation q = encode(v, 2);
  EXPECT_EQ(q.codes[0], 2u);
  EXPECT_EQ(q.codes[1], 0u);
  EXPECT_NEAR(decode(q)[0], 1.0 / 3.0, 1e-15);
  const Vector eps = quantization_error(v, q).epsilon;
  EXPECT_NEAR(eps[0], 1.0 / 6.0, 1e-15);
  EXPECT_LE(std::abs(eps[0]), q.tau() * q.range);
}

TEST(Encode, RoundsToNearestCode) {
  // 2*tau*R = 1, so the scaled position of -1.1 is 2.4.
  const QuantizedInnovation q = encode(Vector{-1.1, 3.5}, 3);
  EXPECT_EQ(q.codes[0], 2u);
  EXPECT_EQ(q.codes[1], 7u);
}

TEST(Encode, RejectsBadInput) {
  EXPECT_THROW(encode(Vector{1.0}, 0), PolicyError);
  EXPECT_THROW(encode(Vector{1.0}, 33), PolicyError);
  EXPECT_THROW(encode(Vector{1.0, NAN}, 4), NumericError);
  EXPECT_THROW(encode(Vector{1.0, INFINITY}, 4), NumericError);
}

TEST(Decode, Examples) {
  QuantizedInnovation q{{0, 0, 0}, 3, 1.0};
  EXPECT_EQ(decode(q), (Vector{-1, -1, -1}));

  q = {{2}, 2, 1.0};
  EXPECT_NEAR(decode(q)[0], 1.0 / 3.0, 1e-15);

  q = {{5, 1, 0}, 3, 0.0};
  EXPECT_EQ(decode(q), Vector::zeros(3));
}

TEST(Decode, ZeroInnovation) {
  const Vector v = Vector::zeros(5);
  const QuantizedInnovation q = encode(v, 1);
  EXPECT_EQ(q.range, 0.0);
  EXPECT_EQ(decode(q), v);
  EXPECT_EQ(quantization_error(v, q).epsilon, v);
}

TEST(Validate, Rejects) {
  EXPECT_THROW(validate({{4}, 2, 1.0}), PolicyError);
  EXPECT_THROW(validate({{0}, 0, 1.0}), PolicyError);
  EXPECT_THROW(validate({{0}, 2, -1.0}), NumericError);
  EXPECT_THROW(validate({{0}, 2, NAN}), NumericError);
  EXPECT_NO_THROW(validate({{3}, 2, 1.0}));
}

TEST(QuantizationError, OnLatticeIsExact) {
  // Lattice for b = 2, R = 3: -3, -1, 1, 3.
  const Vector v{-3.0, -1.0, 1.0, 3.0};
  const QuantizedInnovation q = encode(v, 2);
  EXPECT_EQ(quantization_error(v, q).epsilon, Vector::zeros(4));
}

TEST(QuantizationError, DimensionMismatch) {
  const QuantizedInnovation q = encode(Vector{1.0, 2.0}, 4);
  EXPECT_THROW(quantization_error(Vector{1.0}, q), DimensionError);
}

TEST(PayloadBits, Examples) {
  EXPECT_EQ(payload_bits(encode(Vector(10, 1.0), 4)), 80);
  EXPECT_EQ(payload_bits(encode(Vector{0.5}, 1)), 41);
  EXPECT_EQ(payload_bits(encode(Vector(3, 1.0), 8), 0), 24);
}

TEST(Properties, HalfStepBoundAndCodeRange) {
  Rng rng(42);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t d = 1 + rng.below(64);
    const int bits = 1 + static_cast<int>(rng.below(32));
    const double scale = std::pow(10.0, rng.uniform(-6.0, 6.0));
    Vector v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = scale * rng.normal();
    EncodeStats stats;
    const QuantizedInnovation q = encode(v, bits, &stats);
    ASSERT_NO_THROW(validate(q));
    const Vector back = decode(q);
    const double bound = q.tau() * q.range;
    for (std::size_t i = 0; i < d; ++i) {
      ASSERT_LE(q.codes[i], max_code(bits));
      ASSERT_LE(std::abs(v[i] - back[i]), bound * (1.0 + 1e-12) + 1e-300)
          << "bits " << bits << " i " << i;
    }
  }
}

TEST(Properties, DecodeMatchesLatticeFormula) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const int bits = 1 + static_cast<int>(rng.below(16));
    const double range = rng.uniform(0.01, 100.0);
    QuantizedInnovation q{{}, bits, range};
    for (int i = 0; i < 8; ++i) q.codes.push_back(static_cast<std::uint32_t>(rng.below(max_code(bits) + 1)));
    const Vector back = decode(q);
    const double step = 2.0 * range / (std::ldexp(1.0, bits) - 1.0);
    for (std::size_t i = 0; i < 8; ++i) {
      ASSERT_NEAR(back[i], -range + step * q.codes[i], 1e-12 * range);
    }
  }
}

TEST(Properties, EncodeIsMonotone) {
  Rng rng(11);
  for (int bits : {1, 2, 3, 5, 8}) {
    Vector v(200);
    for (std::size_t i = 0; i < v.dim(); ++i) v[i] = rng.uniform(-1.0, 1.0);
    v[0] = 1.0;
    const QuantizedInnovation q = encode(v, bits);
    for (std::size_t i = 0; i < v.dim(); ++i) {
      for (std::size_t j = 0; j < v.dim(); ++j) {
        if (v[i] <= v[j]) {
          ASSERT_LE(q.codes[i], q.codes[j]);
        }
      }
    }
  }
}

TEST(Properties, ExtremesMapToEndCodes) {
  for (int bits = 1; bits <= 32; ++bits) {
    const QuantizedInnovation q = encode(Vector{-2.5, 2.5}, bits);
    EXPECT_EQ(q.codes[0], 0u);
    EXPECT_EQ(q.codes[1], max_code(bits));
  }
}

TEST(Properties, OneBitLatticeExcludesZero) {
  const Vector v{0.0, 1.0};
  const Vector back = decode(encode(v, 1));
  EXPECT_EQ(std::abs(back[0]), 1.0);
}

}  // namespace
}  // namespace aquila
