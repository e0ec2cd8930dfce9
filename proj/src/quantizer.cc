// SPDX-License-Identifier: Apache-2.0
#include "aquila/quantizer.h"

#include <cmath>
#include <string>

#include "aquila/errors.h"

namespace aquila {

namespace {

void check_bits(int bits) {
  if (bits < kMinBits || bits > kMaxBits) {
    throw PolicyError("quantization level must be in [1, 32], got " + std::to_string(bits));
  }
}

}  // namespace

std::uint32_t max_code(int bits) {
  check_bits(bits);
  return static_cast<std::uint32_t>((std::uint64_t{1} << bits) - 1);
}

double granularity(int bits) { return 1.0 / static_cast<double>(max_code(bits)); }

QuantizedInnovation encode(const Vector& innovation, int bits, EncodeStats* stats) {
  check_bits(bits);
  require_finite(innovation, "encode");

  QuantizedInnovation q;
  q.bits = bits;
  q.range = norm_inf(innovation);
  q.codes.assign(innovation.dim(), 0);
  if (q.range == 0.0) return q;

  const double top = static_cast<double>(max_code(bits));
  const double step = 2.0 * granularity(bits) * q.range;
  for (std::size_t i = 0; i < innovation.dim(); ++i) {
    double code = std::floor((innovation[i] + q.range) / step + 0.5);
    if (code > top) {
      code = top;
      if (stats) ++stats->clamped_high;
    } else if (code < 0.0) {
      code = 0.0;
      if (stats) ++stats->clamped_low;
    }
    q.codes[i] = static_cast<std::uint32_t>(code);
  }
  return q;
}

Vector decode(const QuantizedInnovation& q) {
  Vector out(q.dim());
  if (q.range == 0.0) return out;
  const double step = 2.0 * q.tau() * q.range;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    out[i] = step * static_cast<double>(q.codes[i]) - q.range;
  }
  return out;
}

void validate(const QuantizedInnovation& q) {
  const std::uint32_t top = max_code(q.bits);
  if (!std::isfinite(q.range) || q.range < 0.0) {
    throw NumericError("payload range must be finite and nonnegative");
  }
  for (std::uint32_t c : q.codes) {
    if (c > top) {
      throw PolicyError("payload code " + std::to_string(c) + " exceeds " + std::to_string(top));
    }
  }
}

QuantizationError quantization_error(const Vector& innovation, const QuantizedInnovation& q) {
  if (innovation.dim() != q.dim()) {
    throw DimensionError("quantization_error: innovation has dim " +
                         std::to_string(innovation.dim()) + ", payload has " +
                         std::to_string(q.dim()));
  }
  return {subtract(innovation, decode(q))};
}

std::int64_t payload_bits(const QuantizedInnovation& q, int header_bits) {
  return static_cast<std::int64_t>(q.dim()) * q.bits + header_bits;
}

}  // namespace aquila
