// SPDX-License-Identifier: Apache-2.0
#include "aquila/problems.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <string>

#include "aquila/errors.h"
#include "aquila/random.h"

namespace aquila {

std::vector<ParamBlock> Problem::blocks() const { return {ParamBlock{0, dim(), 1}}; }

double Problem::global_loss(const Vector& theta) const {
  double total = 0.0;
  for (std::size_t m = 0; m < num_devices(); ++m) total += local_loss(m, theta);
  return total / static_cast<double>(num_devices());
}

Vector Problem::global_gradient(const Vector& theta) const {
  Vector total(dim());
  for (std::size_t m = 0; m < num_devices(); ++m) {
    axpy_inplace(1.0, local_gradient(m, theta), total);
  }
  return scale(1.0 / static_cast<double>(num_devices()), total);
}

Vector local_gradient(const Problem& problem, std::size_t device, const Vector& theta,
                      const Mask* mask) {
  require_finite(theta, "local_gradient");
  Vector g = problem.local_gradient(device, theta);
  if (mask == nullptr) return g;
  Vector masked(g.dim());
  for (std::size_t i : *mask) masked[i] = g[i];
  return masked;
}

Mask make_hetero_mask(const Problem& problem, double ratio) {
  if (!(ratio > 0.0) || ratio > 1.0) {
    throw ConfigError("hetero ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  Mask mask;
  for (const ParamBlock& block : problem.blocks()) {
    const auto keep = [ratio](std::size_t n) {
      if (n <= 1) return n;
      const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
      return std::max<std::size_t>(1, k);
    };
    const std::size_t rows = keep(block.rows);
    const std::size_t cols = keep(block.cols);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) mask.push_back(block.offset + i * block.cols + j);
    }
  }
  std::sort(mask.begin(), mask.end());
  return mask;
}

namespace {

// Largest |eigenvalue| of the Hessian of `grad` at `theta`, via power
// iteration on central-difference Hessian-vector products.
template <typename Grad>
double hessian_norm(const Grad& grad, const Vector& theta, int iterations) {
  Rng rng(0x5eed);
  Vector v(theta.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) v[i] = rng.normal();
  v = scale(1.0 / norm2(v), v);
  constexpr double h = 1e-5;
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Vector hv =
        scale(1.0 / (2.0 * h), subtract(grad(axpy(h, v, theta)), grad(axpy(-h, v, theta))));
    const double n = norm2(hv);
    if (n == 0.0) return estimate;
    estimate = n;
    v = scale(1.0 / n, hv);
  }
  return estimate;
}

}  // namespace

SmoothnessConstants smoothness_constants(const Problem& problem) {
  if (auto exact = problem.exact_smoothness()) return *exact;
  constexpr int kIterations = 50;
  const Vector theta = problem.initial_point();
  SmoothnessConstants out;
  out.L = hessian_norm([&](const Vector& x) { return problem.global_gradient(x); }, theta,
                       kIterations);
  for (std::size_t m = 0; m < problem.num_devices(); ++m) {
    out.local_L.push_back(hessian_norm(
        [&](const Vector& x) { return problem.local_gradient(m, x); }, theta, kIterations));
  }
  return out;
}

double estimate_optimal_loss(const Problem& problem, double alpha, std::int64_t rounds) {
  Vector theta = problem.initial_point();
  double best = problem.global_loss(theta);
  for (std::int64_t k = 0; k < rounds; ++k) {
    theta = axpy(-alpha, problem.global_gradient(theta), theta);
    best = std::min(best, problem.global_loss(theta));
  }
  return best;
}

// ---------------------------------------------------------------------------

QuadraticProblem::QuadraticProblem(std::vector<Vector> curvatures, std::vector<Vector> centers,
                                   Vector initial)
    : curvatures_(std::move(curvatures)), centers_(std::move(centers)), initial_(std::move(initial)) {
  if (curvatures_.empty() || curvatures_.size() != centers_.size()) {
    throw ConfigError("quadratic problem needs one curvature and one center per device");
  }
  if (initial_.dim() == 0) throw ConfigError("quadratic problem needs dim >= 1");
  for (std::size_t m = 0; m < curvatures_.size(); ++m) {
    require_same_dim(curvatures_[m], initial_, "quadratic curvature");
    require_same_dim(centers_[m], initial_, "quadratic center");
    for (double h : curvatures_[m]) {
      if (!(h > 0.0) || !std::isfinite(h)) {
        throw ConfigError("quadratic curvatures must be positive and finite");
      }
    }
  }
}

double QuadraticProblem::local_loss(std::size_t device, const Vector& theta) const {
  require_same_dim(theta, initial_, "quadratic loss");
  const Vector& h = curvatures_.at(device);
  const Vector& c = centers_.at(device);
  double total = 0.0;
  for (std::size_t i = 0; i < theta.dim(); ++i) {
    const double r = theta[i] - c[i];
    total += h[i] * r * r;
  }
  return 0.5 * total;
}

Vector QuadraticProblem::local_gradient(std::size_t device, const Vector& theta) const {
  require_same_dim(theta, initial_, "quadratic gradient");
  const Vector& h = curvatures_.at(device);
  const Vector& c = centers_.at(device);
  Vector g(theta.dim());
  for (std::size_t i = 0; i < theta.dim(); ++i) g[i] = h[i] * (theta[i] - c[i]);
  return g;
}

Vector QuadraticProblem::average_curvature() const {
  Vector total(dim());
  for (const Vector& h : curvatures_) axpy_inplace(1.0, h, total);
  return scale(1.0 / static_cast<double>(num_devices()), total);
}

Vector QuadraticProblem::minimizer() const {
  Vector num(dim());
  Vector den(dim());
  for (std::size_t m = 0; m < num_devices(); ++m) {
    for (std::size_t i = 0; i < dim(); ++i) {
      num[i] += curvatures_[m][i] * centers_[m][i];
      den[i] += curvatures_[m][i];
    }
  }
  for (std::size_t i = 0; i < dim(); ++i) num[i] /= den[i];
  return num;
}

std::optional<double> QuadraticProblem::known_optimal_loss() const {
  return global_loss(minimizer());
}

std::optional<SmoothnessConstants> QuadraticProblem::exact_smoothness() const {
  const Vector avg = average_curvature();
  SmoothnessConstants out;
  out.L = *std::max_element(avg.begin(), avg.end());
  out.mu = *std::min_element(avg.begin(), avg.end());
  for (const Vector& h : curvatures_) out.local_L.push_back(*std::max_element(h.begin(), h.end()));
  out.certified = true;
  return out;
}

std::unique_ptr<QuadraticProblem> make_quadratic(std::size_t dim, double cond,
                                                 std::size_t devices, double heterogeneity,
                                                 std::uint64_t seed) {
  if (dim == 0) throw ConfigError("quadratic dim must be >= 1");
  if (devices == 0) throw ConfigError("devices must be >= 1");
  if (!(cond >= 1.0) || !std::isfinite(cond)) throw ConfigError("cond must be finite and >= 1");
  if (!(heterogeneity >= 0.0)) throw ConfigError("heterogeneity must be >= 0");

  Rng rng(seed);
  Vector average(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double t = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
    average[i] = std::pow(cond, t);
  }

  std::vector<Vector> factors(devices, Vector(dim));
  for (std::size_t m = 0; m < devices; ++m) {
    for (std::size_t i = 0; i < dim; ++i) factors[m][i] = rng.uniform(0.5, 1.5);
  }
  std::vector<Vector> curvatures(devices, Vector(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    double mean = 0.0;
    for (std::size_t m = 0; m < devices; ++m) mean += factors[m][i];
    mean /= static_cast<double>(devices);
    for (std::size_t m = 0; m < devices; ++m) {
      curvatures[m][i] = average[i] * factors[m][i] / mean;
    }
  }

  Vector shared(dim);
  for (std::size_t i = 0; i < dim; ++i) shared[i] = rng.normal();
  std::vector<Vector> centers(devices, Vector(dim));
  for (std::size_t m = 0; m < devices; ++m) {
    for (std::size_t i = 0; i < dim; ++i) centers[m][i] = shared[i] + heterogeneity * rng.normal();
  }
  return std::make_unique<QuadraticProblem>(std::move(curvatures), std::move(centers),
                                            Vector(dim));
}

// ---------------------------------------------------------------------------

void Dataset::append(std::span<const double> features_row, int label) {
  if (features_row.size() != features) {
    throw DimensionError("dataset row has " + std::to_string(features_row.size()) +
                         " features, expected " + std::to_string(features));
  }
  x.insert(x.end(), features_row.begin(), features_row.end());
  labels.push_back(label);
}

Dataset make_gaussian_clusters(std::size_t samples, std::size_t features, std::size_t classes,
                               double separation, std::uint64_t seed) {
  if (features == 0 || classes < 2) throw ConfigError("need features >= 1 and classes >= 2");
  if (samples < classes) throw ConfigError("need at least one sample per class");
  Rng rng(seed);
  std::vector<double> means(classes * features);
  for (double& v : means) v = separation * rng.normal();

  Dataset data;
  data.features = features;
  data.classes = classes;
  std::vector<double> row(features);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t label = i % classes;
    for (std::size_t j = 0; j < features; ++j) row[j] = means[label * features + j] + rng.normal();
    data.append(row, static_cast<int>(label));
  }
  return data;
}

PartitionSpec parse_partition(std::string_view text) {
  PartitionSpec spec;
  if (text == "iid") {
    spec.mode = PartitionSpec::Mode::kIid;
    return spec;
  }
  if (text.starts_with("noniid:")) {
    const std::string_view rest = text.substr(7);
    std::size_t c = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), c);
    if (ec == std::errc() && ptr == rest.data() + rest.size() && c >= 1) {
      spec.mode = PartitionSpec::Mode::kNonIid;
      spec.classes_per_device = c;
      return spec;
    }
  }
  throw ConfigError("unknown partition '" + std::string(text) + "' (expected iid or noniid:<c>)");
}

std::string to_string(const PartitionSpec& spec) {
  if (spec.mode == PartitionSpec::Mode::kIid) return "iid";
  return "noniid:" + std::to_string(spec.classes_per_device);
}

namespace {

Dataset gather(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.features = data.features;
  out.classes = data.classes;
  out.x.reserve(indices.size() * data.features);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.append(data.row(i), data.labels[i]);
  return out;
}

// Boundaries of `parts` contiguous near-equal pieces of [0, n).
std::vector<std::size_t> cut_points(std::size_t n, std::size_t parts) {
  std::vector<std::size_t> cuts{0};
  const std::size_t base = n / parts;
  const std::size_t extra = n % parts;
  for (std::size_t p = 0; p < parts; ++p) cuts.push_back(cuts.back() + base + (p < extra ? 1 : 0));
  return cuts;
}

}  // namespace

std::vector<Dataset> partition(const Dataset& data, std::size_t devices,
                               const PartitionSpec& spec) {
  if (devices == 0) throw ConfigError("devices must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);
  rng.shuffle(order);

  std::vector<Dataset> shards;
  if (spec.mode == PartitionSpec::Mode::kIid) {
    if (data.size() < devices) {
      throw ConfigError("iid partition: " + std::to_string(data.size()) + " samples for " +
                        std::to_string(devices) + " devices");
    }
    const auto cuts = cut_points(data.size(), devices);
    for (std::size_t m = 0; m < devices; ++m) {
      shards.push_back(gather(data, std::span(order).subspan(cuts[m], cuts[m + 1] - cuts[m])));
    }
    return shards;
  }

  const std::size_t c = spec.classes_per_device;
  if (c < 1 || c > data.classes) {
    throw ConfigError("noniid partition needs 1 <= classes_per_device <= " +
                      std::to_string(data.classes));
  }
  const std::size_t num_shards = devices * c;
  if (data.size() < num_shards) {
    throw ConfigError("noniid partition: " + std::to_string(data.size()) + " samples for " +
                      std::to_string(num_shards) + " shards");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.labels[a] < data.labels[b];
  });
  const auto cuts = cut_points(data.size(), num_shards);
  std::vector<std::vector<std::size_t>> assigned(devices);
  for (std::size_t s = 0; s < num_shards; ++s) {
    auto& dest = assigned[s % devices];
    dest.insert(dest.end(), order.begin() + static_cast<std::ptrdiff_t>(cuts[s]),
                order.begin() + static_cast<std::ptrdiff_t>(cuts[s + 1]));
  }
  for (std::size_t m = 0; m < devices; ++m) {
    std::set<int> labels;
    for (std::size_t i : assigned[m]) labels.insert(data.labels[i]);
    if (labels.size() > c) {
      throw ConfigError("noniid partition: device " + std::to_string(m) + " would see " +
                        std::to_string(labels.size()) + " labels (limit " + std::to_string(c) +
                        "); class sizes do not divide into whole shards");
    }
    shards.push_back(gather(data, assigned[m]));
  }
  return shards;
}

void write_dataset_csv(std::ostream& out, const std::vector<Dataset>& shards) {
  const std::size_t features = shards.empty() ? 0 : shards.front().features;
  for (std::size_t j = 0; j < features; ++j) out << 'x' << j << ',';
  out << "label,device_id\n";
  char buf[32];
  for (std::size_t m = 0; m < shards.size(); ++m) {
    const Dataset& d = shards[m];
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (double v : d.row(i)) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << ',';
      }
      out << d.labels[i] << ',' << m << '\n';
    }
  }
}

// ---------------------------------------------------------------------------

ClassifierProblem::ClassifierProblem(std::vector<Dataset> shards, double regularization)
    : shards_(std::move(shards)), regularization_(regularization) {
  if (shards_.empty()) throw ConfigError("classifier needs at least one shard");
  features_ = shards_.front().features;
  classes_ = shards_.front().classes;
  for (const Dataset& d : shards_) {
    if (d.features != features_ || d.classes != classes_) {
      throw ConfigError("classifier shards disagree on feature or class count");
    }
    if (d.size() == 0) throw ConfigError("classifier shard is empty");
  }
  if (!(regularization_ >= 0.0)) throw ConfigError("regularization must be >= 0");
}

namespace {

// Softmax cross-entropy of one sample; writes softmax - onehot to `dlogits`.
double cross_entropy(std::span<const double> logits, int label, std::span<double> dlogits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    dlogits[c] = std::exp(logits[c] - top);
    sum += dlogits[c];
  }
  for (double& p : dlogits) p /= sum;
  dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return top + std::log(sum) - logits[static_cast<std::size_t>(label)];
}

}  // namespace

double ClassifierProblem::local_loss(std::size_t device, const Vector& theta) const {
  require_finite(theta, "classifier loss");
  if (theta.dim() != dim()) throw DimensionError("classifier loss: wrong parameter dim");
  const Dataset& d = shards_.at(device);
  std::vector<double> z(classes_);
  std::vector<double> dz(classes_);
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    logits(theta, d.row(i), z);
    total += cross_entropy(z, d.labels[i], dz);
  }
  return total / static_cast<double>(d.size()) + 0.5 * regularization_ * norm2_squared(theta);
}

Vector ClassifierProblem::local_gradient(std::size_t device, const Vector& theta) const {
  require_finite(theta, "classifier gradient");
  if (theta.dim() != dim()) throw DimensionError("classifier gradient: wrong parameter dim");
  const Dataset& d = shards_.at(device);
  std::vector<double> z(classes_);
  std::vector<double> dz(classes_);
  Vector grad(dim());
  const double inv_n = 1.0 / static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    logits(theta, d.row(i), z);
    cross_entropy(z, d.labels[i], dz);
    for (double& v : dz) v *= inv_n;
    backprop(theta, d.row(i), dz, grad);
  }
  axpy_inplace(regularization_, theta, grad);
  return grad;
}

double ClassifierProblem::accuracy(const Vector& theta) const {
  std::vector<double> z(classes_);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const Dataset& d : shards_) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      logits(theta, d.row(i), z);
      const auto best = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
      hits += best == d.labels[i] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

LogisticProblem::LogisticProblem(std::vector<Dataset> shards, double regularization)
    : ClassifierProblem(std::move(shards), regularization) {}

std::vector<ParamBlock> LogisticProblem::blocks() const {
  return {ParamBlock{0, classes_, features_ + 1}};
}

void LogisticProblem::logits(const Vector& theta, std::span<const double> x,
                             std::span<double> out) const {
  const std::size_t stride = features_ + 1;
  for (std::size_t c = 0; c < classes_; ++c) {
    const std::size_t base = c * stride;
    double s = theta[base + features_];
    for (std::size_t j = 0; j < features_; ++j) s += theta[base + j] * x[j];
    out[c] = s;
  }
}

void LogisticProblem::backprop(const Vector&, std::span<const double> x,
                               std::span<const double> dlogits, Vector& grad) const {
  const std::size_t stride = features_ + 1;
  for (std::size_t c = 0; c < classes_; ++c) {
    const std::size_t base = c * stride;
    for (std::size_t j = 0; j < features_; ++j) grad[base + j] += dlogits[c] * x[j];
    grad[base + features_] += dlogits[c];
  }
}

MlpProblem::MlpProblem(std::vector<Dataset> shards, std::size_t hidden, double regularization,
                       std::uint64_t init_seed)
    : ClassifierProblem(std::move(shards), regularization), hidden_(hidden) {
  if (hidden_ == 0) throw ConfigError("mlp hidden width must be >= 1");
  initial_ = Vector(dim());
  Rng rng(init_seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(features_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  const std::size_t w2 = hidden_ * features_ + hidden_;
  for (std::size_t i = 0; i < hidden_ * features_; ++i) initial_[i] = s1 * rng.normal();
  for (std::size_t i = 0; i < classes_ * hidden_; ++i) initial_[w2 + i] = s2 * rng.normal();
}

std::size_t MlpProblem::dim() const {
  return hidden_ * features_ + hidden_ + classes_ * hidden_ + classes_;
}

std::vector<ParamBlock> MlpProblem::blocks() const {
  const std::size_t b1 = hidden_ * features_;
  const std::size_t w2 = b1 + hidden_;
  const std::size_t b2 = w2 + classes_ * hidden_;
  return {ParamBlock{0, hidden_, features_}, ParamBlock{b1, hidden_, 1},
          ParamBlock{w2, classes_, hidden_}, ParamBlock{b2, classes_, 1}};
}

namespace {

void hidden_layer(const Vector& theta, std::span<const double> x, std::size_t hidden,
                  std::size_t features, std::vector<double>& h) {
  const std::size_t b1 = hidden * features;
  for (std::size_t j = 0; j < hidden; ++j) {
    double a = theta[b1 + j];
    for (std::size_t i = 0; i < features; ++i) a += theta[j * features + i] * x[i];
    h[j] = std::tanh(a);
  }
}

}  // namespace

void MlpProblem::logits(const Vector& theta, std::span<const double> x,
                        std::span<double> out) const {
  std::vector<double> h(hidden_);
  hidden_layer(theta, x, hidden_, features_, h);
  const std::size_t w2 = hidden_ * features_ + hidden_;
  const std::size_t b2 = w2 + classes_ * hidden_;
  for (std::size_t c = 0; c < classes_; ++c) {
    double s = theta[b2 + c];
    for (std::size_t j = 0; j < hidden_; ++j) s += theta[w2 + c * hidden_ + j] * h[j];
    out[c] = s;
  }
}

void MlpProblem::backprop(const Vector& theta, std::span<const double> x,
                          std::span<const double> dlogits, Vector& grad) const {
  std::vector<double> h(hidden_);
  hidden_layer(theta, x, hidden_, features_, h);
  const std::size_t b1 = hidden_ * features_;
  const std::size_t w2 = b1 + hidden_;
  const std::size_t b2 = w2 + classes_ * hidden_;
  for (std::size_t j = 0; j < hidden_; ++j) {
    double dh = 0.0;
    for (std::size_t c = 0; c < classes_; ++c) {
      dh += dlogits[c] * theta[w2 + c * hidden_ + j];
      grad[w2 + c * hidden_ + j] += dlogits[c] * h[j];
    }
    const double da = dh * (1.0 - h[j] * h[j]);
    for (std::size_t i = 0; i < features_; ++i) grad[j * features_ + i] += da * x[i];
    grad[b1 + j] += da;
  }
  for (std::size_t c = 0; c < classes_; ++c) grad[b2 + c] += dlogits[c];
}

}  // namespace aquila
