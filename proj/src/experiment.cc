// SPDX-License-Identifier: Apache-2.0
#include "aquila/experiment.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aquila/errors.h"

namespace aquila {

using json = nlohmann::ordered_json;

namespace {

bool is_hetero(const RunConfig& c) {
  return std::any_of(c.hetero_ratios.begin(), c.hetero_ratios.end(),
                     [](double r) { return r < 1.0; });
}

std::unique_ptr<Problem> make_problem(const RunConfig& c) {
  const auto dim = static_cast<std::size_t>(c.dim);
  const auto devices = static_cast<std::size_t>(c.devices);
  if (c.problem == "quadratic") {
    return make_quadratic(dim, c.cond, devices, c.heterogeneity, c.seed);
  }
  const Dataset data = make_gaussian_clusters(static_cast<std::size_t>(c.samples), dim,
                                              static_cast<std::size_t>(c.classes),
                                              c.separation, c.seed);
  PartitionSpec spec = c.partition;
  spec.seed = c.seed + 1;
  auto shards = partition(data, devices, spec);
  if (c.problem == "logistic") {
    return std::make_unique<LogisticProblem>(std::move(shards), c.regularization);
  }
  return std::make_unique<MlpProblem>(std::move(shards), static_cast<std::size_t>(c.hidden),
                                      c.regularization, c.seed + 2);
}

std::int64_t reference_rounds(const RunConfig& c) { return c.reference_rounds.value_or(c.rounds); }

json optional_real(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
std::string optional_cell(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) {
    return format_real(*v);
  } else {
    return std::to_string(*v);
  }
}

}  // namespace

Experiment build_experiment(const RunConfig& config) {
  validate(config);
  Experiment e;
  e.config = config;
  e.problem = make_problem(config);
  e.smoothness = smoothness_constants(*e.problem);
  if (auto known = e.problem->known_optimal_loss()) {
    e.f_star = *known;
    e.f_star_exact = true;
  } else {
    const std::int64_t horizon = std::max(config.rounds, reference_rounds(config)) + 1;
    e.f_star = estimate_optimal_loss(*e.problem, config.alpha, config.fstar_rounds_factor * horizon);
  }
  return e;
}

RunOutcome execute(const Experiment& experiment) {
  return execute(experiment, experiment.config.level_policy, experiment.config.beta);
}

RunOutcome execute(const Experiment& e, const PolicySpec& policy, double beta) {
  const RunConfig& c = e.config;
  MonitorConfig mc;
  mc.alpha = c.alpha;
  mc.beta = beta;
  mc.L = e.smoothness.L;
  mc.L_certified = e.smoothness.certified;
  mc.mu = e.smoothness.mu;
  mc.f_star = e.f_star;
  mc.gamma = c.gamma;
  mc.p = c.p;
  mc.hetero = is_hetero(c);
  TheoryMonitor monitor(mc);

  RunOptions options;
  options.rounds = c.rounds;
  options.alpha = c.alpha;
  options.beta = beta;
  options.policy = policy;
  options.header_bits = static_cast<int>(c.header_bits);
  options.hetero_ratios = c.hetero_ratios;

  RunOutcome out;
  out.policy = to_string(policy);
  out.beta = beta;
  out.run = run(*e.problem, options, monitor.observer());
  out.monitor = monitor.finalize();
  attach_bounds(out.monitor, out.run.reports);
  if (const auto* clf = dynamic_cast<const ClassifierProblem*>(e.problem.get())) {
    out.accuracy = clf->accuracy(out.run.server.theta);
  }
  return out;
}

std::vector<double> loss_trajectory(const RunResult& run) {
  std::vector<double> losses;
  for (const RoundReport& r : run.reports) losses.push_back(r.global.loss);
  if (!run.reports.empty()) losses.push_back(run.final_loss);
  return losses;
}

double reference_gap(const Experiment& e) {
  Vector theta = e.problem->initial_point();
  const std::int64_t steps = reference_rounds(e.config) + 1;
  for (std::int64_t k = 0; k < steps; ++k) {
    theta = axpy(-e.config.alpha, e.problem->global_gradient(theta), theta);
  }
  return e.problem->global_loss(theta) - e.f_star;
}

double tolerance(const Experiment& e) {
  if (e.config.tol) return *e.config.tol;
  return 1.01 * reference_gap(e);
}

ToleranceHit first_hit(const RunResult& run, double f_star, double tol) {
  ToleranceHit hit;
  const std::vector<double> losses = loss_trajectory(run);
  std::int64_t bits = 0;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    if (losses[k] - f_star <= tol) {
      hit.rounds_to_tol = static_cast<std::int64_t>(k);
      hit.bits_to_tol = bits;
      break;
    }
    if (k < run.reports.size()) {
      for (const DeviceRecord& d : run.reports[k].devices) bits += d.bits;
    }
  }
  return hit;
}

void write_rounds_csv(std::ostream& out, const RunResult& run) {
  out << "round,device_id,uploaded,bits,level,range,innovation_norm2,eps_norm2,global_loss,"
         "grad_norm2,theta_diff_norm2,gamma_est,descent_lhs,descent_rhs,deviation_lhs,"
         "deviation_rhs\n";
  for (const RoundReport& r : run.reports) {
    const GlobalRecord& g = r.global;
    for (std::size_t m = 0; m < r.devices.size(); ++m) {
      const DeviceRecord& d = r.devices[m];
      out << r.round << ',' << m << ',' << (d.uploaded ? "true" : "false") << ',' << d.bits
          << ',' << d.level << ',' << format_real(d.range) << ','
          << format_real(d.innovation_norm2) << ',' << format_real(d.eps_norm2) << ','
          << format_real(g.loss) << ',' << format_real(g.grad_norm2) << ','
          << format_real(g.theta_diff_norm2) << ',' << optional_cell(g.gamma_est) << ','
          << optional_cell(g.descent_lhs) << ',' << optional_cell(g.descent_rhs) << ','
          << optional_cell(g.deviation_lhs) << ',' << optional_cell(g.deviation_rhs) << '\n';
    }
  }
}

std::string summary_json(const Experiment& e, const RunOutcome& o) {
  json config = json::object();
  std::istringstream lines(serialize(e.config));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find(" = ");
    config[line.substr(0, eq)] = line.substr(eq + 3);
  }
  config["level_policy"] = o.policy;
  config["beta"] = format_real(o.beta);

  json problem;
  problem["kind"] = std::string(e.problem->kind());
  problem["dim"] = e.problem->dim();
  problem["devices"] = e.problem->num_devices();
  problem["L"] = e.smoothness.L;
  problem["L_certified"] = e.smoothness.certified;
  problem["mu"] = optional_real(e.smoothness.mu);
  problem["local_L"] = e.smoothness.local_L;
  problem["f_star"] = e.f_star;
  problem["f_star_exact"] = e.f_star_exact;

  const RunResult& r = o.run;
  json run;
  run["rounds_executed"] = r.reports.size();
  run["aborted"] = r.aborted;
  run["abort_message"] = r.abort_message;
  run["initial_loss"] = r.initial_loss;
  run["final_loss"] = r.final_loss;
  run["final_gap"] = r.final_loss - e.f_star;
  run["accuracy"] = optional_real(o.accuracy);
  run["total_bits"] = r.total_bits;
  run["uploads_total"] = r.uploads_total;
  run["clamp_events"] = r.clamp_events;
  run["level_cap_hits"] = r.level_cap_hits;
  run["gamma_max"] = o.monitor.gamma_max;

  json devices = json::array();
  for (const DeviceState& d : r.devices) {
    devices.push_back({{"id", d.id}, {"uploads", d.uploads}, {"bits_sent", d.bits_sent}});
  }

  json root;
  root["config"] = config;
  root["problem"] = problem;
  root["run"] = run;
  root["devices"] = devices;
  return root.dump(2) + "\n";
}

std::string certificates_json(const RunOutcome& o) {
  const MonitorReport& m = o.monitor;
  json root;
  root["gamma_max"] = m.gamma_max;
  root["gamma_used"] = m.gamma_used;
  root["gamma_source"] = m.gamma_overridden ? "config" : "measured";
  root["L"] = m.L;
  root["L_certified"] = m.L_certified;
  root["mu"] = optional_real(m.mu);
  root["f_star"] = optional_real(m.f_star);
  root["tolerance"] = m.tolerance;
  root["p"] = m.p;

  json conditions;
  conditions["empty_skip_gate"] = m.empty_skip_gate;
  conditions["empty_skip_gate_met"] = m.empty_skip_gate <= 0.0;
  conditions["nonconvex_condition"] = m.nonconvex_condition;
  conditions["nonconvex_condition_met"] = m.nonconvex_condition <= 0.0;
  conditions["pl_condition_lhs"] = optional_real(m.pl_condition_lhs);
  conditions["pl_condition_rhs"] = optional_real(m.pl_condition_rhs);
  root["conditions"] = conditions;
  root["all_skip_rounds"] = m.all_skip_rounds;
  root["no_skip_rounds"] = m.no_skip_rounds;
  root["max_model_discrepancy"] = m.max_model_discrepancy;

  json certs;
  for (const auto& [name, c] : m.certificates) {
    json j;
    j["status"] = std::string(to_string(c.status));
    j["worst_margin"] = optional_real(c.worst_margin);
    j["first_violation_round"] =
        c.first_violation ? json(c.first_violation->round) : json(nullptr);
    j["rounds_checked"] = c.rounds_checked;
    j["violations"] = c.violations;
    j["rounds_not_asserted"] = c.rounds_not_asserted;
    j["note"] = c.note;
    if (c.first_violation) {
      j["first_violation"] = {{"round", c.first_violation->round},
                              {"lhs", c.first_violation->lhs},
                              {"rhs", c.first_violation->rhs}};
    }
    certs[name] = j;
  }
  root["certificates"] = certs;

  // Statement-line constant (4 R^2 d + d/2), recorded but not asserted.
  json statement;
  std::int64_t rounds = 0;
  std::int64_t exceeding = 0;
  std::optional<double> worst;
  for (const RoundBounds& b : m.rounds) {
    if (!b.deviation_lhs || !b.deviation_rhs_statement) continue;
    ++rounds;
    const double margin = *b.deviation_rhs_statement - *b.deviation_lhs;
    worst = worst ? std::min(*worst, margin) : margin;
    if (margin < -m.tolerance) ++exceeding;
  }
  statement["rounds"] = rounds;
  statement["rounds_exceeding"] = exceeding;
  statement["worst_margin"] = optional_real(worst);
  root["deviation_statement_form"] = statement;
  return root.dump(2) + "\n";
}

void write_file(const std::string& dir, const std::string& name, const std::string& content) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  const auto path = std::filesystem::path(dir) / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_run_outputs(const std::string& dir, const Experiment& e, const RunOutcome& o) {
  std::ostringstream csv;
  write_rounds_csv(csv, o.run);
  write_file(dir, "rounds.csv", csv.str());
  write_file(dir, "summary.json", summary_json(e, o));
  write_file(dir, "certificates.json", certificates_json(o));
}

std::vector<CompareRow> compare_policies(const Experiment& e,
                                         const std::vector<PolicySpec>& policies, double tol) {
  std::vector<CompareRow> rows;
  for (const PolicySpec& p : policies) {
    const RunOutcome o = execute(e, p, e.config.beta);
    const ToleranceHit hit = first_hit(o.run, e.f_star, tol);
    CompareRow row;
    row.policy = o.policy;
    row.final_loss = o.run.final_loss;
    row.total_bits = o.run.total_bits;
    row.rounds_to_tol = hit.rounds_to_tol;
    row.uploads_total = o.run.uploads_total;
    row.bits_to_tol = hit.bits_to_tol;
    rows.push_back(row);
  }
  return rows;
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
  out << "policy,final_loss,total_bits,rounds_to_tol,uploads_total,bits_to_tol\n";
  for (const CompareRow& r : rows) {
    out << r.policy << ',' << format_real(r.final_loss) << ',' << r.total_bits << ','
        << optional_cell(r.rounds_to_tol) << ',' << r.uploads_total << ','
        << optional_cell(r.bits_to_tol) << '\n';
  }
}

std::vector<SweepRow> sweep_beta(const Experiment& e, const std::vector<double>& betas,
                                 double tol) {
  std::vector<SweepRow> rows;
  for (double beta : betas) {
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    const RunOutcome o = execute(e, e.config.level_policy, beta);
    const ToleranceHit hit = first_hit(o.run, e.f_star, tol);
    SweepRow row;
    row.beta = beta;
    row.final_loss = o.run.final_loss;
    row.total_bits = o.run.total_bits;
    row.uploads_total = o.run.uploads_total;
    row.rounds_to_tol = hit.rounds_to_tol;
    row.bits_to_tol = hit.bits_to_tol;
    row.gamma_max = o.monitor.gamma_max;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "beta,final_loss,total_bits,uploads_total,rounds_to_tol,bits_to_tol,gamma_max\n";
  for (const SweepRow& r : rows) {
    out << format_real(r.beta) << ',' << format_real(r.final_loss) << ',' << r.total_bits << ','
        << r.uploads_total << ',' << optional_cell(r.rounds_to_tol) << ','
        << optional_cell(r.bits_to_tol) << ',' << format_real(r.gamma_max) << '\n';
  }
}

}  // namespace aquila
