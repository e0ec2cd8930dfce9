// SPDX-License-Identifier: Apache-2.0
#include "aquila/numerics.h"

#include <cmath>
#include <string>

#include "aquila/errors.h"

namespace aquila {

void require_same_dim(const Vector& a, const Vector& b, std::string_view context) {
  if (a.dim() != b.dim()) {
    throw DimensionError(std::string(context) + ": dimension mismatch (" +
                         std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
}

bool all_finite(const Vector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void require_finite(const Vector& v, std::string_view context) {
  for (std::size_t i = 0; i < v.dim(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(std::string(context) + ": non-finite entry at index " +
                         std::to_string(i));
    }
  }
}

double dot(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2_squared(const Vector& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

double norm2(const Vector& v) { return std::sqrt(norm2_squared(v)); }

double norm_inf(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Vector axpy(double a, const Vector& x, const Vector& y) {
  require_same_dim(x, y, "axpy");
  Vector out(y.dim());
  for (std::size_t i = 0; i < y.dim(); ++i) out[i] = a * x[i] + y[i];
  require_finite(out, "axpy");
  return out;
}

void axpy_inplace(double a, const Vector& x, Vector& y) {
  require_same_dim(x, y, "axpy_inplace");
  for (std::size_t i = 0; i < y.dim(); ++i) y[i] += a * x[i];
  require_finite(y, "axpy_inplace");
}

Vector add(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "add");
  Vector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  require_finite(out, "add");
  return out;
}

Vector subtract(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "subtract");
  Vector out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
  require_finite(out, "subtract");
  return out;
}

Vector scale(double a, const Vector& x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = a * x[i];
  require_finite(out, "scale");
  return out;
}

}  // namespace aquila
