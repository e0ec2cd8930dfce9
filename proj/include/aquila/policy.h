// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

#include "aquila/numerics.h"
#include "aquila/quantizer.h"

namespace aquila {

enum class LevelRule {
  kAquila,      // deviation-minimizing rule, floor of the continuous optimum
  kAquilaCeil,  // same optimum rounded up (diagnostic variant, tau <= tau*)
  kFixed,
  kAdaQuantFl,  // floor(sqrt(f0/fk) * b0)
};

struct LevelPolicy {
  LevelRule rule = LevelRule::kAquila;
  int bits = 0;  // b for kFixed, b0 for kAdaQuantFl, unused otherwise
  int cap = kMaxBits;

  static LevelPolicy aquila() { return {LevelRule::kAquila, 0, kMaxBits}; }
  static LevelPolicy aquila_ceil() { return {LevelRule::kAquilaCeil, 0, kMaxBits}; }
  static LevelPolicy fixed(int b);
  static LevelPolicy adaquantfl(int b0);

  bool operator==(const LevelPolicy&) const = default;
};

// Device-selection threshold parameters: skip iff
//   ||dq||^2 + ||eps||^2 <= (beta / alpha^2) * ||theta^k - theta^{k-1}||^2.
struct SkipPolicy {
  double beta = 0.0;
  double alpha = 0.1;
};

// A named level policy plus whether the skip test runs at all.
// "fixed:32-full" is the full-participation reference (lazy == false).
struct PolicySpec {
  LevelPolicy level;
  bool lazy = true;

  bool operator==(const PolicySpec&) const = default;
};

// Accepts "aquila", "aquila-ceil", "fixed:<b>", "fixed:<b>-full",
// "adaquantfl:<b0>". Throws ConfigError on anything else.
PolicySpec parse_policy(std::string_view text);
std::string to_string(const PolicySpec& spec);

// floor(log2(R*sqrt(d)/||v||_2 + 1)), capped at `cap`; 1 for a zero innovation.
int aquila_level(const Vector& innovation, int cap = kMaxBits);
// Rounded-up counterpart of aquila_level, still capped and >= 1.
int aquila_ceil_level(const Vector& innovation, int cap = kMaxBits);

// Continuous minimizer ||v||_2 / (R*sqrt(d)) of the deviation objective.
// Throws DegenerateInput for a zero innovation.
double optimal_tau(const Vector& innovation);

// (||v||_2 - tau(bits)*R*sqrt(d))^2.
double deviation_objective(const Vector& innovation, int bits);

// max(1, min(cap, floor(sqrt(f0/fk) * b0))). `capped` reports whether the
// cap was binding. Throws NumericError for nonpositive losses.
int adaquantfl_level(double f0, double fk, int b0, int cap = kMaxBits, bool* capped = nullptr);

bool should_skip(const QuantizedInnovation& dq, const QuantizationError& err,
                 double theta_diff_sq, const SkipPolicy& policy);

// Global losses consulted by loss-driven rules.
struct LossContext {
  double initial_loss = 1.0;
  double current_loss = 1.0;
};

struct LevelChoice {
  int bits = kMinBits;
  bool capped = false;
};

LevelChoice select_level(const LevelPolicy& policy, const Vector& innovation,
                         const LossContext& losses);

}  // namespace aquila
