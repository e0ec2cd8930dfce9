// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale federated objectives. Every problem exposes the per-device
// empirical risks f_m and their exact full-batch gradients; the global
// objective is the plain device average f = (1/M) sum_m f_m.
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aquila/numerics.h"

namespace aquila {

// Sorted coordinate indices a device trains on. Absent means the full model.
using Mask = std::vector<std::size_t>;

// A row-major weight matrix (or a vector when cols == 1) inside the flat
// parameter vector.
struct ParamBlock {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;
};

struct SmoothnessConstants {
  double L = 0.0;
  std::optional<double> mu;
  std::vector<double> local_L;
  bool certified = false;
};

class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string_view kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t num_devices() const = 0;
  virtual double local_loss(std::size_t device, const Vector& theta) const = 0;
  virtual Vector local_gradient(std::size_t device, const Vector& theta) const = 0;
  virtual Vector initial_point() const = 0;

  // Weight matrices used for heterogeneous sub-model slicing. Defaults to a
  // single dim x 1 block.
  virtual std::vector<ParamBlock> blocks() const;
  // Closed-form minimum when the problem has one.
  virtual std::optional<double> known_optimal_loss() const { return std::nullopt; }
  // Exact constants when the Hessian is known.
  virtual std::optional<SmoothnessConstants> exact_smoothness() const { return std::nullopt; }

  double global_loss(const Vector& theta) const;
  Vector global_gradient(const Vector& theta) const;
};

// Full-batch gradient of f_m, zeroed outside `mask` when one is given.
Vector local_gradient(const Problem& problem, std::size_t device, const Vector& theta,
                      const Mask* mask);

// Leading floor(r*rows) x floor(r*cols) block of every weight matrix (at least
// one row/column each; vectors keep their single column). ratio == 1 selects
// everything.
Mask make_hetero_mask(const Problem& problem, double ratio);

// Exact constants for problems that provide them; otherwise a power-iteration
// estimate of the Hessian spectral norm at the initial point (mu absent).
SmoothnessConstants smoothness_constants(const Problem& problem);

// Loss after `rounds` steps of unquantized full-participation gradient descent
// from the initial point; the operational f* for problems without a closed form.
double estimate_optimal_loss(const Problem& problem, double alpha, std::int64_t rounds);

// ---------------------------------------------------------------------------
// Quadratics: f_m(theta) = 1/2 sum_i h_mi (theta_i - c_mi)^2 with h_mi > 0.

class QuadraticProblem final : public Problem {
 public:
  QuadraticProblem(std::vector<Vector> curvatures, std::vector<Vector> centers, Vector initial);

  std::string_view kind() const override { return "quadratic"; }
  std::size_t dim() const override { return initial_.dim(); }
  std::size_t num_devices() const override { return curvatures_.size(); }
  double local_loss(std::size_t device, const Vector& theta) const override;
  Vector local_gradient(std::size_t device, const Vector& theta) const override;
  Vector initial_point() const override { return initial_; }
  std::optional<double> known_optimal_loss() const override;
  std::optional<SmoothnessConstants> exact_smoothness() const override;

  // Diagonal of the average Hessian.
  Vector average_curvature() const;
  Vector minimizer() const;

  const std::vector<Vector>& curvatures() const { return curvatures_; }
  const std::vector<Vector>& centers() const { return centers_; }

 private:
  std::vector<Vector> curvatures_;
  std::vector<Vector> centers_;
  Vector initial_;
};

// Average curvature log-spaced on [1, cond]; per-device curvatures scatter
// around it by a factor in [0.5, 1.5]; centers are a shared offset plus
// `heterogeneity` times a per-device normal draw. Starts at the origin.
std::unique_ptr<QuadraticProblem> make_quadratic(std::size_t dim, double cond,
                                                 std::size_t devices, double heterogeneity,
                                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Labelled data and partitioning.

struct Dataset {
  std::size_t features = 0;
  std::size_t classes = 0;
  std::vector<double> x;  // row-major, size() x features
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(x).subspan(i * features, features);
  }
  void append(std::span<const double> features_row, int label);
};

// Balanced Gaussian class clusters: class means ~ separation * N(0, I),
// samples = mean + N(0, I). Class sizes differ by at most one.
Dataset make_gaussian_clusters(std::size_t samples, std::size_t features, std::size_t classes,
                               double separation, std::uint64_t seed);

struct PartitionSpec {
  enum class Mode { kIid, kNonIid };
  Mode mode = Mode::kIid;
  std::size_t classes_per_device = 2;
  std::uint64_t seed = 0;

  bool operator==(const PartitionSpec&) const = default;
};

// "iid" or "noniid:<classes per device>".
PartitionSpec parse_partition(std::string_view text);
std::string to_string(const PartitionSpec& spec);

// iid: seeded shuffle, then contiguous near-equal split.
// noniid(c): seeded shuffle, stable sort by label, cut into devices*c
// contiguous shards, deal shard s to device s mod devices. Throws ConfigError
// when there are fewer samples than shards or a device would see more than c
// labels.
std::vector<Dataset> partition(const Dataset& data, std::size_t devices,
                               const PartitionSpec& spec);

// CSV with columns x0..x{F-1},label,device_id.
void write_dataset_csv(std::ostream& out, const std::vector<Dataset>& shards);

// ---------------------------------------------------------------------------
// Classifiers: mean cross-entropy per shard plus (reg/2)*||theta||^2.

class ClassifierProblem : public Problem {
 public:
  ClassifierProblem(std::vector<Dataset> shards, double regularization);

  std::size_t num_devices() const override { return shards_.size(); }
  double local_loss(std::size_t device, const Vector& theta) const override;
  Vector local_gradient(std::size_t device, const Vector& theta) const override;

  // Fraction of all samples whose arg-max prediction matches the label.
  double accuracy(const Vector& theta) const;

  const std::vector<Dataset>& shards() const { return shards_; }
  std::size_t features() const { return features_; }
  std::size_t classes() const { return classes_; }

 protected:
  // Class scores for one sample.
  virtual void logits(const Vector& theta, std::span<const double> x,
                      std::span<double> out) const = 0;
  // Adds the gradient of the sample loss, given dloss/dlogits, into `grad`.
  virtual void backprop(const Vector& theta, std::span<const double> x,
                        std::span<const double> dlogits, Vector& grad) const = 0;

  std::vector<Dataset> shards_;
  std::size_t features_ = 0;
  std::size_t classes_ = 0;
  double regularization_ = 0.0;
};

// Multinomial logistic regression; theta is a classes x (features + 1)
// matrix whose last column is the bias. Starts at zero.
class LogisticProblem final : public ClassifierProblem {
 public:
  LogisticProblem(std::vector<Dataset> shards, double regularization);

  std::string_view kind() const override { return "logistic"; }
  std::size_t dim() const override { return classes_ * (features_ + 1); }
  Vector initial_point() const override { return Vector(dim()); }
  std::vector<ParamBlock> blocks() const override;

 protected:
  void logits(const Vector& theta, std::span<const double> x,
              std::span<double> out) const override;
  void backprop(const Vector& theta, std::span<const double> x,
                std::span<const double> dlogits, Vector& grad) const override;
};

// One tanh hidden layer. Layout: W1 (hidden x features), b1, W2 (classes x
// hidden), b2. Weights start at N(0, 1/fan_in), biases at zero.
class MlpProblem final : public ClassifierProblem {
 public:
  MlpProblem(std::vector<Dataset> shards, std::size_t hidden, double regularization,
             std::uint64_t init_seed);

  std::string_view kind() const override { return "mlp"; }
  std::size_t dim() const override;
  Vector initial_point() const override { return initial_; }
  std::vector<ParamBlock> blocks() const override;
  std::size_t hidden() const { return hidden_; }

 protected:
  void logits(const Vector& theta, std::span<const double> x,
              std::span<double> out) const override;
  void backprop(const Vector& theta, std::span<const double> x,
                std::span<const double> dlogits, Vector& grad) const override;

 private:
  std::size_t hidden_;
  Vector initial_;
};

}  // namespace aquila
