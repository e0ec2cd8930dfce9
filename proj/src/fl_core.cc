// SPDX-License-Identifier: Apache-2.0
#include "aquila/fl_core.h"

#include <cmath>
#include <string>

#include "aquila/errors.h"

namespace aquila {

namespace {

Vector gather(const Vector& full, const Mask& mask) {
  Vector out(mask.size());
  for (std::size_t j = 0; j < mask.size(); ++j) out[j] = full[mask[j]];
  return out;
}

Vector scatter(const Vector& compact, const std::optional<Mask>& mask, std::size_t dim) {
  if (!mask) return compact;
  Vector out(dim);
  for (std::size_t j = 0; j < mask->size(); ++j) out[(*mask)[j]] = compact[j];
  return out;
}

std::vector<std::size_t> coverage_counts(std::size_t dim,
                                         const std::vector<std::optional<Mask>>& masks) {
  std::vector<std::size_t> counts(dim, 0);
  for (const auto& mask : masks) {
    if (!mask) {
      for (auto& c : counts) ++c;
    } else {
      for (std::size_t i : *mask) ++counts[i];
    }
  }
  return counts;
}

}  // namespace

std::vector<DeviceState> make_devices(std::size_t dim,
                                      const std::vector<std::optional<Mask>>& masks) {
  std::vector<DeviceState> devices(masks.size());
  for (std::size_t m = 0; m < masks.size(); ++m) {
    devices[m].id = m;
    devices[m].q_prev = Vector(dim);
    devices[m].mask = masks[m];
  }
  return devices;
}

ServerState make_server(const Vector& theta0, double alpha,
                        const std::vector<std::optional<Mask>>& masks) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("alpha must be positive and finite");
  }
  if (masks.empty()) throw ConfigError("need at least one device");
  ServerState s;
  s.theta = theta0;
  s.theta_prev = theta0;
  s.q_avg = Vector(theta0.dim());
  s.alpha = alpha;
  s.mirrors.assign(masks.size(), Vector(theta0.dim()));
  s.masks = masks;
  s.coverage = coverage_counts(theta0.dim(), masks);
  return s;
}

DeviceStepResult device_step(DeviceState& device, const Problem& problem, const Vector& theta,
                             double theta_diff_sq, const LevelPolicy& level,
                             const SkipPolicy& skip, const DeviceStepOptions& options) {
  const std::size_t dim = problem.dim();
  require_same_dim(theta, device.q_prev, "device_step");
  const Mask* mask = device.mask ? &*device.mask : nullptr;
  const Vector gradient = local_gradient(problem, device.id, theta, mask);
  if (!all_finite(gradient)) {
    throw NumericError("device " + std::to_string(device.id) + " produced a non-finite gradient");
  }

  const Vector innovation = mask ? subtract(gather(gradient, *mask), gather(device.q_prev, *mask))
                                 : subtract(gradient, device.q_prev);

  DeviceStepResult out;
  const LevelChoice choice = select_level(level, innovation, options.losses);
  QuantizedInnovation q = encode(innovation, choice.bits, &out.record.clamps);
  const Vector dq = decode(q);
  const QuantizationError err = quantization_error(innovation, q);
  const bool skipped = options.allow_skip && should_skip(q, err, theta_diff_sq, skip);

  DeviceRecord& rec = out.record;
  rec.uploaded = !skipped;
  rec.level = choice.bits;
  rec.level_capped = choice.capped;
  rec.range = q.range;
  rec.innovation_norm2 = norm2_squared(innovation);
  rec.eps_norm2 = norm2_squared(err.epsilon);

  DeviceTrace& tr = out.trace;
  tr.gradient = gradient;
  tr.q_prev_before = device.q_prev;
  tr.dq = scatter(dq, device.mask, dim);
  tr.eps = scatter(err.epsilon, device.mask, dim);
  tr.level = choice.bits;
  tr.range = q.range;
  tr.sub_dim = innovation.dim();
  tr.uploaded = rec.uploaded;

  if (rec.uploaded) {
    rec.bits = payload_bits(q, options.header_bits);
    axpy_inplace(1.0, tr.dq, device.q_prev);
    ++device.uploads;
    device.bits_sent += rec.bits;
    out.payload = std::move(q);
  }
  return out;
}

void server_apply(ServerState& server, const std::vector<std::optional<Vector>>& increments) {
  if (increments.size() != server.mirrors.size()) {
    throw DimensionError("server_apply: " + std::to_string(increments.size()) +
                         " increments for " + std::to_string(server.mirrors.size()) + " devices");
  }
  for (std::size_t m = 0; m < increments.size(); ++m) {
    if (!increments[m]) continue;
    require_same_dim(*increments[m], server.theta, "server_apply");
    axpy_inplace(1.0, *increments[m], server.mirrors[m]);
  }
  Vector total(server.theta.dim());
  for (const Vector& mirror : server.mirrors) axpy_inplace(1.0, mirror, total);
  for (std::size_t i = 0; i < total.dim(); ++i) {
    const std::size_t count = server.coverage[i];
    server.q_avg[i] = count == 0 ? 0.0 : total[i] / static_cast<double>(count);
  }
  Vector next = axpy(-server.alpha, server.q_avg, server.theta);
  server.theta_prev = std::move(server.theta);
  server.theta = std::move(next);
  ++server.round;
}

void server_update(ServerState& server, const std::vector<Upload>& uploads) {
  const std::size_t dim = server.theta.dim();
  std::vector<std::optional<Vector>> increments(server.mirrors.size());
  for (const Upload& up : uploads) {
    if (up.device >= server.mirrors.size()) {
      throw DimensionError("server_update: unknown device " + std::to_string(up.device));
    }
    const auto& mask = server.masks[up.device];
    const std::size_t expected = mask ? mask->size() : dim;
    if (up.payload.dim() != expected) {
      throw DimensionError("server_update: device " + std::to_string(up.device) +
                           " sent " + std::to_string(up.payload.dim()) + " codes, expected " +
                           std::to_string(expected));
    }
    validate(up.payload);
    increments[up.device] = scatter(decode(up.payload), mask, dim);
  }
  server_apply(server, increments);
}

std::vector<std::optional<Mask>> device_masks(const Problem& problem,
                                              const std::vector<double>& ratios) {
  std::vector<std::optional<Mask>> masks(problem.num_devices());
  if (ratios.empty()) return masks;
  for (std::size_t m = 0; m < masks.size(); ++m) {
    const double r = ratios[m % ratios.size()];
    if (r == 1.0) continue;
    masks[m] = make_hetero_mask(problem, r);
  }
  return masks;
}

RunResult run(const Problem& problem, const RunOptions& options, const RoundObserver& observer) {
  if (options.rounds < 0) throw ConfigError("rounds must be >= 0");
  if (!(options.beta >= 0.0)) throw ConfigError("beta must be >= 0");

  const auto masks = device_masks(problem, options.hetero_ratios);
  bool hetero = false;
  for (const auto& m : masks) hetero = hetero || m.has_value();

  RunResult result;
  const Vector theta0 = problem.initial_point();
  result.devices = make_devices(problem.dim(), masks);
  result.server = make_server(theta0, options.alpha, masks);
  const SkipPolicy skip{options.beta, options.alpha};
  const std::size_t num_devices = problem.num_devices();
  ServerState& server = result.server;

  try {
    result.initial_loss = problem.global_loss(theta0);
    result.final_loss = result.initial_loss;
    double loss = result.initial_loss;
    for (std::int64_t k = 0; k <= options.rounds; ++k) {
      RoundTrace trace;
      trace.round = k;
      trace.alpha = options.alpha;
      trace.theta_prev = server.theta_prev;
      trace.theta = server.theta;
      trace.loss = loss;

      DeviceStepOptions step_options;
      step_options.allow_skip = options.policy.lazy && k > 0;
      step_options.header_bits = options.header_bits;
      step_options.losses = {result.initial_loss, loss};

      const double theta_diff_sq = norm2_squared(subtract(server.theta, server.theta_prev));
      RoundReport report;
      report.round = k;
      std::vector<Upload> uploads;
      Vector grad_sum(problem.dim());
      for (std::size_t m = 0; m < num_devices; ++m) {
        DeviceStepResult step = device_step(result.devices[m], problem, server.theta,
                                            theta_diff_sq, options.policy.level, skip,
                                            step_options);
        if (step.payload) uploads.push_back({m, std::move(*step.payload)});
        result.total_bits += step.record.bits;
        result.uploads_total += step.record.uploaded ? 1 : 0;
        result.clamp_events += static_cast<std::int64_t>(step.record.clamps.clamped_high +
                                                         step.record.clamps.clamped_low);
        result.level_cap_hits += step.record.level_capped ? 1 : 0;
        if (!hetero) axpy_inplace(1.0, step.trace.gradient, grad_sum);
        report.devices.push_back(step.record);
        trace.devices.push_back(std::move(step.trace));
      }
      trace.gradient = hetero ? problem.global_gradient(server.theta)
                              : scale(1.0 / static_cast<double>(num_devices), grad_sum);

      server_update(server, uploads);
      const double loss_next = problem.global_loss(server.theta);
      if (!std::isfinite(loss_next)) {
        throw NumericError("global loss became non-finite at round " + std::to_string(k));
      }

      report.global.loss = loss;
      report.global.grad_norm2 = norm2_squared(trace.gradient);
      report.global.theta_diff_norm2 = theta_diff_sq;
      result.reports.push_back(std::move(report));

      trace.theta_next = server.theta;
      trace.loss_next = loss_next;
      if (observer) observer(trace);

      loss = loss_next;
      result.final_loss = loss_next;
    }
  } catch (const NumericError& e) {
    result.aborted = true;
    result.abort_message = e.what();
  }
  return result;
}

}  // namespace aquila
