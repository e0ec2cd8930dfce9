// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace aquila {

// Dense real vector. Every reduction below runs sequentially in index order,
// so results are bit-reproducible for identical inputs.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  static Vector zeros(std::size_t dim) { return Vector(dim, 0.0); }
  static Vector ones(std::size_t dim) { return Vector(dim, 1.0); }

  std::size_t dim() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

// Throws DimensionError naming `context` when the dimensions differ.
void require_same_dim(const Vector& a, const Vector& b, std::string_view context);
// Throws NumericError naming `context` on any NaN/Inf entry.
void require_finite(const Vector& v, std::string_view context);
bool all_finite(const Vector& v);

double dot(const Vector& a, const Vector& b);
double norm2_squared(const Vector& v);
double norm2(const Vector& v);
double norm_inf(const Vector& v);

// a*x + y.
Vector axpy(double a, const Vector& x, const Vector& y);
Vector add(const Vector& a, const Vector& b);
Vector subtract(const Vector& a, const Vector& b);
Vector scale(double a, const Vector& x);

// In-place y += a*x, used by accumulators on hot paths.
void axpy_inplace(double a, const Vector& x, Vector& y);

}  // namespace aquila
