// SPDX-License-Identifier: Apache-2.0
//
// Deterministic uniform quantizer for gradient innovations.
//
// An innovation v with range R = ||v||_inf is mapped coordinate-wise onto the
// 2^b-point lattice {-R + 2*tau*R*j : j = 0 .. 2^b - 1}, tau = 1/(2^b - 1):
//
//   code_i   = floor((v_i + R) / (2*tau*R) + 1/2)
//   decoded  = 2*tau*R*code - R
//
// The reconstruction error is at most tau*R per coordinate.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "aquila/numerics.h"

namespace aquila {

inline constexpr int kMinBits = 1;
inline constexpr int kMaxBits = 32;
// One 32-bit float for the range plus an 8-bit level header per upload.
inline constexpr int kDefaultHeaderBits = 32 + 8;

// Quantization granularity tau = 1/(2^bits - 1). Throws PolicyError when bits
// is outside [kMinBits, kMaxBits].
double granularity(int bits);

// Largest legal code for `bits`, i.e. 2^bits - 1.
std::uint32_t max_code(int bits);

// The wire payload of one upload.
struct QuantizedInnovation {
  std::vector<std::uint32_t> codes;
  int bits = kMinBits;
  double range = 0.0;

  std::size_t dim() const { return codes.size(); }
  double tau() const { return granularity(bits); }
};

struct QuantizationError {
  Vector epsilon;
};

// Clamp events observed while encoding. The rounding formula can land one
// code past the top of the lattice when v_i is within an ulp of +R.
struct EncodeStats {
  std::size_t clamped_high = 0;
  std::size_t clamped_low = 0;
};

QuantizedInnovation encode(const Vector& innovation, int bits, EncodeStats* stats = nullptr);

// Affine decode 2*tau*R*codes - R. A zero range decodes to the zero vector.
Vector decode(const QuantizedInnovation& q);

// Throws PolicyError for an illegal level or out-of-range code and
// NumericError for a negative or non-finite range.
void validate(const QuantizedInnovation& q);

// epsilon = innovation - decode(q).
QuantizationError quantization_error(const Vector& innovation, const QuantizedInnovation& q);

// Transmitted size of an upload: dim*bits code bits plus the header.
std::int64_t payload_bits(const QuantizedInnovation& q, int header_bits = kDefaultHeaderBits);

}  // namespace aquila
