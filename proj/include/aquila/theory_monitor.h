// SPDX-License-Identifier: Apache-2.0
//
// Per-round numeric checks of the convergence inequalities, evaluated from
// the raw vectors each round exposes rather than from the report fields the
// round loop computes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aquila/fl_core.h"

namespace aquila {

enum class CheckStatus { kPass, kFail, kConditionNotMet, kVacuous };

std::string_view to_string(CheckStatus status);

struct Violation {
  std::int64_t round = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct Certificate {
  CheckStatus status = CheckStatus::kVacuous;
  std::optional<double> worst_margin;  // min over asserted rounds of rhs - lhs
  std::optional<Violation> first_violation;
  std::int64_t rounds_checked = 0;
  std::int64_t violations = 0;
  std::int64_t rounds_not_asserted = 0;  // hypothesis failed that round
  std::string note;
};

struct MonitorConfig {
  double alpha = 0.1;
  double beta = 0.0;
  double L = 1.0;
  bool L_certified = false;
  std::optional<double> mu;
  std::optional<double> f_star;
  std::optional<double> gamma;  // overrides the measured gamma_max
  double p = 0.1;
  double tolerance = 1e-9;
  bool hetero = false;
};

// Scalars the monitor keeps for one round; everything needed to evaluate the
// inequalities for any gamma.
struct RoundMeasurements {
  std::int64_t round = 0;
  std::size_t devices = 0;
  std::size_t skipped = 0;
  double loss = 0.0;              // f(theta^k)
  double loss_next = 0.0;         // f(theta^{k+1})
  double grad_norm2 = 0.0;        // ||grad f(theta^k)||^2
  double step_norm2 = 0.0;        // ||theta^{k+1} - theta^k||^2
  double diff_norm2 = 0.0;        // ||theta^k - theta^{k-1}||^2
  double skipped_dq_norm2 = 0.0;  // ||(1/M) sum_{skipped} dq_m||^2
  double eps_avg_norm2 = 0.0;     // ||(1/M) sum_m eps_m||^2
  double skipped_eps_norm2 = 0.0; // ||sum_{skipped} eps_m||^2
  std::optional<double> gamma_est;
  // Distance between the counterfactual all-upload model and theta^{k+1},
  // with the proof-final and statement-line right-hand sides.
  double deviation_lhs = 0.0;
  double deviation_rhs = 0.0;
  double deviation_rhs_statement = 0.0;
  // |theta^{k+1} recomputed from device vectors - theta^{k+1} from the server|_inf
  double model_discrepancy = 0.0;
};

struct RoundBounds {
  std::int64_t round = 0;
  std::optional<double> gamma_est;
  double descent_lhs = 0.0;
  double descent_rhs = 0.0;
  double innovation_bound_lhs = 0.0;
  double innovation_bound_rhs = 0.0;
  std::optional<double> deviation_lhs;
  std::optional<double> deviation_rhs;
  std::optional<double> deviation_rhs_statement;
  std::optional<double> pl_lhs;  // 2 mu (f - f*)
  std::optional<double> pl_rhs;  // ||grad f||^2
};

struct MonitorReport {
  double gamma_max = 1.0;
  double gamma_used = 1.0;
  bool gamma_overridden = false;
  double L = 0.0;
  bool L_certified = false;
  std::optional<double> mu;
  std::optional<double> f_star;
  double tolerance = 1e-9;
  double p = 0.1;
  double empty_skip_gate = 0.0;         // (alpha*L - 1)(1 + 1/p) + 2
  double nonconvex_condition = 0.0;    // L/2 - 1/(2 alpha) + beta*gamma/alpha
  std::optional<double> pl_condition_lhs;  // beta*gamma/alpha
  std::optional<double> pl_condition_rhs;  // (1 - alpha*mu)(1/(2 alpha) - L/2)
  double max_model_discrepancy = 0.0;
  std::int64_t all_skip_rounds = 0;
  std::int64_t no_skip_rounds = 0;
  std::vector<std::pair<std::string, Certificate>> certificates;
  std::vector<RoundBounds> rounds;

  const Certificate* find(std::string_view name) const;
  bool any_fail() const;
};

class TheoryMonitor {
 public:
  explicit TheoryMonitor(MonitorConfig config) : config_(config) {}

  void observe(const RoundTrace& trace);
  RoundObserver observer() {
    return [this](const RoundTrace& t) { observe(t); };
  }

  // Largest per-round gamma estimate seen so far, floored at 1.
  double gamma_max() const;
  const std::vector<RoundMeasurements>& measurements() const { return rounds_; }
  MonitorReport finalize() const;

 private:
  MonitorConfig config_;
  std::vector<RoundMeasurements> rounds_;
  double initial_step_norm2_ = 0.0;  // ||theta^1 - theta^0||^2
};

// Copies gamma_est and the descent/deviation sides into the run's reports.
void attach_bounds(const MonitorReport& report, std::vector<RoundReport>& rounds);

}  // namespace aquila
