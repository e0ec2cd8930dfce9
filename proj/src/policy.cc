// SPDX-License-Identifier: Apache-2.0
#include "aquila/policy.h"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "aquila/errors.h"

namespace aquila {

namespace {

void check_level(int b, const char* what) {
  if (b < kMinBits || b > kMaxBits) {
    throw PolicyError(std::string(what) + " must be in [1, 32], got " + std::to_string(b));
  }
}

int parse_level(std::string_view text, std::string_view full) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("bad level in policy '" + std::string(full) + "'");
  }
  if (value < kMinBits || value > kMaxBits) {
    throw ConfigError("level out of [1, 32] in policy '" + std::string(full) + "'");
  }
  return value;
}

// log2(R*sqrt(d)/||v|| + 1), the continuous optimum expressed in bits.
double continuous_level(const Vector& v, double norm) {
  const double ratio = norm_inf(v) * std::sqrt(static_cast<double>(v.dim())) / norm;
  return std::log2(ratio + 1.0);
}

}  // namespace

LevelPolicy LevelPolicy::fixed(int b) {
  check_level(b, "fixed level");
  return {LevelRule::kFixed, b, kMaxBits};
}

LevelPolicy LevelPolicy::adaquantfl(int b0) {
  check_level(b0, "AdaQuantFL base level");
  return {LevelRule::kAdaQuantFl, b0, kMaxBits};
}

PolicySpec parse_policy(std::string_view text) {
  if (text == "aquila") return {LevelPolicy::aquila(), true};
  if (text == "aquila-ceil") return {LevelPolicy::aquila_ceil(), true};
  if (text.starts_with("fixed:")) {
    std::string_view rest = text.substr(6);
    bool full = false;
    if (rest.ends_with("-full")) {
      full = true;
      rest.remove_suffix(5);
    }
    return {LevelPolicy::fixed(parse_level(rest, text)), !full};
  }
  if (text.starts_with("adaquantfl:")) {
    return {LevelPolicy::adaquantfl(parse_level(text.substr(11), text)), true};
  }
  throw ConfigError("unknown level policy '" + std::string(text) + "'");
}

std::string to_string(const PolicySpec& spec) {
  switch (spec.level.rule) {
    case LevelRule::kAquila:
      return "aquila";
    case LevelRule::kAquilaCeil:
      return "aquila-ceil";
    case LevelRule::kFixed:
      return "fixed:" + std::to_string(spec.level.bits) + (spec.lazy ? "" : "-full");
    case LevelRule::kAdaQuantFl:
      return "adaquantfl:" + std::to_string(spec.level.bits);
  }
  return "unknown";
}

int aquila_level(const Vector& innovation, int cap) {
  const double norm = norm2(innovation);
  if (norm == 0.0) return kMinBits;
  const double level = std::floor(continuous_level(innovation, norm));
  // ||v||_2 <= sqrt(d)*R puts the exact value at >= 1; rounding can dip below.
  return static_cast<int>(std::clamp(level, double{kMinBits}, static_cast<double>(cap)));
}

int aquila_ceil_level(const Vector& innovation, int cap) {
  const double norm = norm2(innovation);
  if (norm == 0.0) return kMinBits;
  const double level = std::ceil(continuous_level(innovation, norm));
  return static_cast<int>(std::clamp(level, double{kMinBits}, static_cast<double>(cap)));
}

double optimal_tau(const Vector& innovation) {
  const double range = norm_inf(innovation);
  if (range == 0.0) throw DegenerateInput("optimal_tau: zero innovation");
  const double tau =
      norm2(innovation) / (range * std::sqrt(static_cast<double>(innovation.dim())));
  return std::min(tau, 1.0);
}

double deviation_objective(const Vector& innovation, int bits) {
  const double step_norm = granularity(bits) * norm_inf(innovation) *
                           std::sqrt(static_cast<double>(innovation.dim()));
  const double gap = norm2(innovation) - step_norm;
  return gap * gap;
}

int adaquantfl_level(double f0, double fk, int b0, int cap, bool* capped) {
  if (!(f0 > 0.0) || !(fk > 0.0) || !std::isfinite(f0) || !std::isfinite(fk)) {
    throw NumericError("adaquantfl_level: losses must be positive and finite");
  }
  check_level(b0, "AdaQuantFL base level");
  const double raw = std::floor(std::sqrt(f0 / fk) * b0);
  if (capped) *capped = raw > cap;
  return static_cast<int>(std::clamp(raw, double{kMinBits}, static_cast<double>(cap)));
}

bool should_skip(const QuantizedInnovation& dq, const QuantizationError& err,
                 double theta_diff_sq, const SkipPolicy& policy) {
  const double lhs = norm2_squared(decode(dq)) + norm2_squared(err.epsilon);
  const double threshold = policy.beta / (policy.alpha * policy.alpha) * theta_diff_sq;
  return lhs <= threshold;
}

LevelChoice select_level(const LevelPolicy& policy, const Vector& innovation,
                         const LossContext& losses) {
  switch (policy.rule) {
    case LevelRule::kAquila:
      return {aquila_level(innovation, policy.cap), false};
    case LevelRule::kAquilaCeil:
      return {aquila_ceil_level(innovation, policy.cap), false};
    case LevelRule::kFixed:
      return {std::min(policy.bits, policy.cap), false};
    case LevelRule::kAdaQuantFl: {
      LevelChoice choice;
      choice.bits = adaquantfl_level(losses.initial_loss, losses.current_loss, policy.bits,
                                     policy.cap, &choice.capped);
      return choice;
    }
  }
  throw PolicyError("unknown level rule");
}

}  // namespace aquila
