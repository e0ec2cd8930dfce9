// SPDX-License-Identifier: Apache-2.0
//
// Builds problems from a RunConfig, runs them under the theory monitor and
// renders the run outputs (rounds.csv, summary.json, certificates.json) plus
// the policy-comparison and beta-sweep tables.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "aquila/config.h"
#include "aquila/fl_core.h"
#include "aquila/problems.h"
#include "aquila/theory_monitor.h"

namespace aquila {

struct Experiment {
  RunConfig config;
  std::unique_ptr<Problem> problem;
  SmoothnessConstants smoothness;
  double f_star = 0.0;
  bool f_star_exact = false;
};

// Seeds: data/quadratic = seed, partition = seed + 1, MLP init = seed + 2.
// f* for problems without a closed form is the best loss of unquantized
// gradient descent over fstar_rounds_factor times the longest horizon.
Experiment build_experiment(const RunConfig& config);

struct RunOutcome {
  std::string policy;
  double beta = 0.0;
  RunResult run;
  MonitorReport monitor;
  std::optional<double> accuracy;
};

RunOutcome execute(const Experiment& experiment);
RunOutcome execute(const Experiment& experiment, const PolicySpec& policy, double beta);

// Loss sequence f(theta^0) .. f(theta^{K+1}) of a run.
std::vector<double> loss_trajectory(const RunResult& run);

// f(theta) - f* after reference_rounds + 1 unquantized full-participation
// steps (the same step count as a run with K = reference_rounds).
double reference_gap(const Experiment& experiment);
// config.tol, or 1.01 * reference_gap.
double tolerance(const Experiment& experiment);

struct ToleranceHit {
  std::optional<std::int64_t> rounds_to_tol;  // first k with f(theta^k) - f* <= tol
  std::optional<std::int64_t> bits_to_tol;    // bits sent in rounds 0 .. k-1
};
ToleranceHit first_hit(const RunResult& run, double f_star, double tol);

void write_rounds_csv(std::ostream& out, const RunResult& run);
std::string summary_json(const Experiment& experiment, const RunOutcome& outcome);
std::string certificates_json(const RunOutcome& outcome);

// Writes rounds.csv, summary.json and certificates.json into `dir`,
// creating it if needed. Throws IoError.
void write_run_outputs(const std::string& dir, const Experiment& experiment,
                       const RunOutcome& outcome);

struct CompareRow {
  std::string policy;
  double final_loss = 0.0;
  std::int64_t total_bits = 0;
  std::optional<std::int64_t> rounds_to_tol;
  std::int64_t uploads_total = 0;
  std::optional<std::int64_t> bits_to_tol;
};

std::vector<CompareRow> compare_policies(const Experiment& experiment,
                                         const std::vector<PolicySpec>& policies, double tol);
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);

struct SweepRow {
  double beta = 0.0;
  double final_loss = 0.0;
  std::int64_t total_bits = 0;
  std::int64_t uploads_total = 0;
  std::optional<std::int64_t> rounds_to_tol;
  std::optional<std::int64_t> bits_to_tol;
  double gamma_max = 1.0;
};

std::vector<SweepRow> sweep_beta(const Experiment& experiment, const std::vector<double>& betas,
                                 double tol);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// Writes `content` to dir/name, creating dir. Throws IoError.
void write_file(const std::string& dir, const std::string& name, const std::string& content);

}  // namespace aquila
