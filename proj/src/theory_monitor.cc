// SPDX-License-Identifier: Apache-2.0
#include "aquila/theory_monitor.h"

#include <algorithm>
#include <cmath>

#include "aquila/quantizer.h"

namespace aquila {

std::string_view to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::kPass:
      return "PASS";
    case CheckStatus::kFail:
      return "FAIL";
    case CheckStatus::kConditionNotMet:
      return "CONDITION_NOT_MET";
    case CheckStatus::kVacuous:
      return "VACUOUS";
  }
  return "UNKNOWN";
}

const Certificate* MonitorReport::find(std::string_view name) const {
  for (const auto& [key, cert] : certificates) {
    if (key == name) return &cert;
  }
  return nullptr;
}

bool MonitorReport::any_fail() const {
  return std::any_of(certificates.begin(), certificates.end(),
                     [](const auto& kv) { return kv.second.status == CheckStatus::kFail; });
}

void TheoryMonitor::observe(const RoundTrace& trace) {
  const std::size_t M = trace.devices.size();
  const std::size_t dim = trace.theta.dim();
  const double inv_m = 1.0 / static_cast<double>(M);

  RoundMeasurements r;
  r.round = trace.round;
  r.devices = M;
  r.loss = trace.loss;
  r.loss_next = trace.loss_next;
  r.grad_norm2 = norm2_squared(trace.gradient);
  r.step_norm2 = norm2_squared(subtract(trace.theta_next, trace.theta));
  r.diff_norm2 = norm2_squared(subtract(trace.theta, trace.theta_prev));

  Vector dq_skipped(dim);
  Vector eps_all(dim);
  Vector eps_skipped(dim);
  Vector all_upload(dim);  // sum over every device of q_prev + dq
  Vector actual(dim);      // sum of what the server actually aggregates
  double deviation_terms = 0.0;
  double statement_terms = 0.0;
  for (const DeviceTrace& dev : trace.devices) {
    axpy_inplace(1.0, dev.eps, eps_all);
    const Vector refreshed = axpy(1.0, dev.dq, dev.q_prev_before);
    axpy_inplace(1.0, refreshed, all_upload);
    if (dev.uploaded) {
      axpy_inplace(1.0, refreshed, actual);
      continue;
    }
    ++r.skipped;
    axpy_inplace(1.0, dev.dq, dq_skipped);
    axpy_inplace(1.0, dev.eps, eps_skipped);
    actual = axpy(1.0, dev.q_prev_before, actual);

    const double d = static_cast<double>(dev.sub_dim);
    const double R = dev.range;
    const double innovation_norm = norm2(subtract(dev.gradient, dev.q_prev_before));
    const double gap = innovation_norm - granularity(dev.level) * R * std::sqrt(d);
    deviation_terms += gap * gap + 6.0 * R * R * d;
    statement_terms += gap * gap + 4.0 * R * R * d + d / 2.0;
  }

  r.skipped_dq_norm2 = norm2_squared(scale(inv_m, dq_skipped));
  r.eps_avg_norm2 = norm2_squared(scale(inv_m, eps_all));
  r.skipped_eps_norm2 = norm2_squared(eps_skipped);
  if (r.skipped > 0 && r.skipped_eps_norm2 > 0.0) {
    r.gamma_est = static_cast<double>(M * M) * r.eps_avg_norm2 / r.skipped_eps_norm2;
  }

  const double gamma_coef = trace.alpha * trace.alpha * static_cast<double>(r.skipped) /
                            static_cast<double>(M * M);
  r.deviation_rhs = 4.0 * gamma_coef * deviation_terms;
  r.deviation_rhs_statement = 4.0 * gamma_coef * statement_terms;

  if (!config_.hetero) {
    Vector full_avg(dim);
    Vector actual_avg(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      full_avg[i] = all_upload[i] / static_cast<double>(M);
      actual_avg[i] = actual[i] / static_cast<double>(M);
    }
    const Vector counterfactual = axpy(-trace.alpha, full_avg, trace.theta);
    const Vector recomputed = axpy(-trace.alpha, actual_avg, trace.theta);
    r.deviation_lhs = norm2_squared(subtract(counterfactual, trace.theta_next));
    r.model_discrepancy = norm_inf(subtract(recomputed, trace.theta_next));
  }

  if (trace.round == 0) initial_step_norm2_ = r.step_norm2;
  rounds_.push_back(r);
}

double TheoryMonitor::gamma_max() const {
  double g = 1.0;
  for (const auto& r : rounds_) {
    if (r.gamma_est) g = std::max(g, *r.gamma_est);
  }
  return g;
}

namespace {

class Checker {
 public:
  explicit Checker(double tolerance) : tol_(tolerance) {}

  void check(std::int64_t round, double lhs, double rhs) {
    ++cert_.rounds_checked;
    const double margin = rhs - lhs;
    cert_.worst_margin = cert_.worst_margin ? std::min(*cert_.worst_margin, margin) : margin;
    if (!(lhs <= rhs + tol_)) {
      ++cert_.violations;
      if (!cert_.first_violation) cert_.first_violation = Violation{round, lhs, rhs};
    }
  }
  void skip_round() { ++cert_.rounds_not_asserted; }

  Certificate finish(bool condition_met, std::string note) {
    cert_.note = std::move(note);
    if (!condition_met) {
      cert_.status = CheckStatus::kConditionNotMet;
    } else if (cert_.rounds_checked == 0) {
      cert_.status = CheckStatus::kVacuous;
    } else {
      cert_.status = cert_.violations > 0 ? CheckStatus::kFail : CheckStatus::kPass;
    }
    if (!condition_met) {
      cert_.worst_margin.reset();
      cert_.first_violation.reset();
      cert_.rounds_checked = 0;
      cert_.violations = 0;
    }
    return cert_;
  }

 private:
  double tol_;
  Certificate cert_;
};

}  // namespace

MonitorReport TheoryMonitor::finalize() const {
  const MonitorConfig& c = config_;
  MonitorReport out;
  out.gamma_max = gamma_max();
  out.gamma_overridden = c.gamma.has_value();
  out.gamma_used = c.gamma.value_or(out.gamma_max);
  out.L = c.L;
  out.L_certified = c.L_certified;
  out.mu = c.mu;
  out.f_star = c.f_star;
  out.tolerance = c.tolerance;
  out.p = c.p;

  const double alpha = c.alpha;
  const double gamma = out.gamma_used;
  const double skip_coef = c.beta * gamma / alpha;     // beta*gamma/alpha
  const double step_coef = c.L / 2.0 - 1.0 / (2.0 * alpha);
  out.empty_skip_gate = (alpha * c.L - 1.0) * (1.0 + 1.0 / c.p) + 2.0;
  out.nonconvex_condition = step_coef + skip_coef;

  Checker descent(c.tolerance);
  Checker innovation_bound(c.tolerance);
  Checker deviation(c.tolerance);
  Checker empty_skip(c.tolerance);
  Checker pl_inequality(c.tolerance);
  const bool gate_open = out.empty_skip_gate <= 0.0;

  for (const RoundMeasurements& r : rounds_) {
    out.max_model_discrepancy = std::max(out.max_model_discrepancy, r.model_discrepancy);
    if (r.skipped == r.devices) ++out.all_skip_rounds;
    if (r.skipped == 0) ++out.no_skip_rounds;

    RoundBounds b;
    b.round = r.round;
    b.gamma_est = r.gamma_est;
    b.descent_lhs = r.loss_next - r.loss;
    b.descent_rhs = -alpha / 2.0 * r.grad_norm2 + step_coef * r.step_norm2 +
                    skip_coef * r.diff_norm2;
    b.innovation_bound_lhs = r.skipped_dq_norm2 + r.eps_avg_norm2;
    b.innovation_bound_rhs = c.beta * gamma / (alpha * alpha) * r.diff_norm2;

    if (r.skipped > 0) {
      if (!c.hetero) {
        b.deviation_lhs = r.deviation_lhs;
        b.deviation_rhs = r.deviation_rhs;
        b.deviation_rhs_statement = r.deviation_rhs_statement;
        deviation.check(r.round, r.deviation_lhs, r.deviation_rhs);
      }
      // Bounded global error: ||eps_avg||^2 <= (gamma/M^2) ||sum_skipped eps||^2.
      const double m2 = static_cast<double>(r.devices * r.devices);
      const bool bounded = r.eps_avg_norm2 <= gamma / m2 * r.skipped_eps_norm2 * (1.0 + 1e-12);
      if (bounded) {
        descent.check(r.round, b.descent_lhs, b.descent_rhs);
        innovation_bound.check(r.round, b.innovation_bound_lhs, b.innovation_bound_rhs);
      } else {
        descent.skip_round();
        innovation_bound.skip_round();
      }
    } else if (gate_open) {
      empty_skip.check(r.round, b.descent_lhs, -alpha / 2.0 * r.grad_norm2);
    }

    if (c.mu && c.f_star) {
      b.pl_lhs = 2.0 * *c.mu * (r.loss - *c.f_star);
      b.pl_rhs = r.grad_norm2;
      pl_inequality.check(r.round, *b.pl_lhs, *b.pl_rhs);
    }
    out.rounds.push_back(b);
  }

  const std::string hetero_note = "sliced sub-models: averaging differs from the analysed update";
  out.certificates.emplace_back(
      "descent", descent.finish(!c.hetero, c.hetero ? hetero_note
                                                    : "rounds with at least one skipped device"));
  out.certificates.emplace_back(
      "innovation_error_bound",
      innovation_bound.finish(!c.hetero, c.hetero ? hetero_note : "rounds with at least one skipped device"));
  out.certificates.emplace_back(
      "deviation_bound",
      deviation.finish(!c.hetero, c.hetero ? hetero_note
                                           : "proof-final constant 6*R^2*d; rounds with skips"));
  out.certificates.emplace_back(
      "empty_skip_descent",
      empty_skip.finish(!c.hetero && gate_open,
                        c.hetero     ? hetero_note
                        : gate_open  ? "rounds where every device uploaded"
                                     : "(alpha*L - 1)(1 + 1/p) + 2 > 0"));
  out.certificates.emplace_back(
      "pl_inequality",
      pl_inequality.finish(c.mu && c.f_star, c.mu && c.f_star ? "2*mu*(f - f*) <= ||grad f||^2"
                                                              : "no certified mu"));

  // Geometric rate of the Lyapunov value f(theta^{K+1}) - f* + c*||theta^{K+1} - theta^K||^2.
  {
    Checker pl(c.tolerance);
    std::string note;
    bool ok = !c.hetero;
    if (c.hetero) note = hetero_note;
    if (ok && !(c.mu && c.f_star && c.L_certified)) {
      ok = false;
      note = "requires certified mu, L and f*";
    }
    const double lyap = 1.0 / (2.0 * alpha) - c.L / 2.0;
    if (ok) {
      out.pl_condition_lhs = skip_coef;
      out.pl_condition_rhs = (1.0 - alpha * *c.mu) * lyap;
      if (!(lyap > 0.0)) {
        ok = false;
        note = "1/(2 alpha) - L/2 <= 0";
      } else if (!(*out.pl_condition_lhs <= *out.pl_condition_rhs)) {
        ok = false;
        note = "beta*gamma/alpha > (1 - alpha*mu)(1/(2 alpha) - L/2)";
      }
    }
    if (ok && !rounds_.empty()) {
      const double omega1 = rounds_[0].loss_next - *c.f_star + lyap * initial_step_norm2_;
      const double rate = 1.0 - alpha * *c.mu;
      for (std::size_t K = 1; K < rounds_.size(); ++K) {
        const RoundMeasurements& r = rounds_[K];
        const double lhs = r.loss_next - *c.f_star + lyap * r.step_norm2;
        pl.check(static_cast<std::int64_t>(K), lhs, std::pow(rate, static_cast<double>(K)) * omega1);
      }
      note = "f(theta^{K+1}) - f* + c*||theta^{K+1} - theta^K||^2 <= (1 - alpha*mu)^K * omega_1";
    }
    out.certificates.emplace_back("pl_convergence", pl.finish(ok, note));
  }

  {
    Checker rate(c.tolerance);
    bool ok = !c.hetero && out.nonconvex_condition <= 0.0;
    std::string note = c.hetero ? hetero_note
                       : ok     ? "min_k ||grad f(theta^k)||^2 over every prefix"
                                : "L/2 - 1/(2 alpha) + beta*gamma/alpha > 0";
    if (ok && !rounds_.empty()) {
      const double f1 = rounds_[0].loss_next;
      double best = INFINITY;
      for (std::size_t K = 1; K < rounds_.size(); ++K) {
        const RoundMeasurements& r = rounds_[K];
        best = std::min(best, r.grad_norm2);
        const double rhs = 2.0 / (alpha * static_cast<double>(K)) *
                           (f1 - r.loss_next + skip_coef * initial_step_norm2_);
        rate.check(static_cast<std::int64_t>(K), best, rhs);
      }
    }
    out.certificates.emplace_back("nonconvex_rate", rate.finish(ok, note));
  }
  return out;
}

void attach_bounds(const MonitorReport& report, std::vector<RoundReport>& rounds) {
  for (RoundReport& rr : rounds) {
    for (const RoundBounds& b : report.rounds) {
      if (b.round != rr.round) continue;
      rr.global.gamma_est = b.gamma_est;
      rr.global.descent_lhs = b.descent_lhs;
      rr.global.descent_rhs = b.descent_rhs;
      rr.global.deviation_lhs = b.deviation_lhs;
      rr.global.deviation_rhs = b.deviation_rhs;
      break;
    }
  }
}

}  // namespace aquila
