// SPDX-License-Identifier: Apache-2.0
//
// The federated round loop: devices quantize their gradient innovation and
// decide whether to upload; the server lazily aggregates and steps.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aquila/numerics.h"
#include "aquila/policy.h"
#include "aquila/problems.h"
#include "aquila/quantizer.h"

namespace aquila {

struct DeviceState {
  std::size_t id = 0;
  Vector q_prev;              // full model dimension, zero outside the mask
  std::optional<Mask> mask;   // hetero mode only
  std::int64_t uploads = 0;
  std::int64_t bits_sent = 0;
};

// Server view. `mirrors` replays every device's q_prev from the payloads the
// server received, so q_avg is always the per-coordinate average of exactly
// the vectors the devices hold.
struct ServerState {
  Vector theta;
  Vector theta_prev;
  Vector q_avg;
  double alpha = 0.1;
  std::int64_t round = 0;
  std::vector<Vector> mirrors;
  std::vector<std::optional<Mask>> masks;
  std::vector<std::size_t> coverage;  // devices training each coordinate
};

std::vector<DeviceState> make_devices(std::size_t dim, const std::vector<std::optional<Mask>>& masks);
ServerState make_server(const Vector& theta0, double alpha,
                        const std::vector<std::optional<Mask>>& masks);

struct DeviceRecord {
  bool uploaded = false;
  std::int64_t bits = 0;
  int level = kMinBits;
  bool level_capped = false;
  double range = 0.0;
  double innovation_norm2 = 0.0;  // squared
  double eps_norm2 = 0.0;         // squared
  EncodeStats clamps;
};

// Everything a device computed this round, scattered to full dimension.
struct DeviceTrace {
  Vector gradient;       // masked local gradient
  Vector q_prev_before;  // q_m^{k-1}
  Vector dq;             // decoded innovation, present even when skipped
  Vector eps;            // quantization error
  int level = kMinBits;
  double range = 0.0;
  std::size_t sub_dim = 0;  // coordinates the device quantizes
  bool uploaded = false;
};

struct DeviceStepOptions {
  bool allow_skip = true;
  int header_bits = kDefaultHeaderBits;
  LossContext losses;
};

struct DeviceStepResult {
  std::optional<QuantizedInnovation> payload;  // over the masked coordinates
  DeviceRecord record;
  DeviceTrace trace;
};

// Gradient, innovation, level, encode, error, skip test. On upload q_prev
// absorbs the decoded innovation. Throws NumericError on a non-finite gradient.
DeviceStepResult device_step(DeviceState& device, const Problem& problem, const Vector& theta,
                             double theta_diff_sq, const LevelPolicy& level,
                             const SkipPolicy& skip, const DeviceStepOptions& options);

struct Upload {
  std::size_t device = 0;
  QuantizedInnovation payload;
};

// Applies the round's uploads (ascending device id) and steps
// theta <- theta - alpha * q_avg. Throws DimensionError on a payload whose
// length does not match the device's coordinate set.
void server_update(ServerState& server, const std::vector<Upload>& uploads);

// Full-dimension increments already decoded; `increments[m]` is empty for a
// device that skipped.
void server_apply(ServerState& server, const std::vector<std::optional<Vector>>& increments);

struct GlobalRecord {
  double loss = 0.0;              // f(theta^k)
  double grad_norm2 = 0.0;        // ||grad f(theta^k)||^2
  double theta_diff_norm2 = 0.0;  // ||theta^k - theta^{k-1}||^2
  // Filled from the theory monitor after the run.
  std::optional<double> gamma_est;
  std::optional<double> descent_lhs;
  std::optional<double> descent_rhs;
  std::optional<double> deviation_lhs;
  std::optional<double> deviation_rhs;
};

struct RoundReport {
  std::int64_t round = 0;
  std::vector<DeviceRecord> devices;
  GlobalRecord global;
};

struct RoundTrace {
  std::int64_t round = 0;
  double alpha = 0.0;
  Vector theta_prev;  // theta^{k-1} (theta^0 at round 0)
  Vector theta;       // theta^k
  Vector theta_next;  // theta^{k+1}
  double loss = 0.0;
  double loss_next = 0.0;
  Vector gradient;    // grad f(theta^k)
  std::vector<DeviceTrace> devices;
};

using RoundObserver = std::function<void(const RoundTrace&)>;

struct RunOptions {
  std::int64_t rounds = 100;  // K; rounds 0..K are executed
  double alpha = 0.1;
  double beta = 0.0;
  PolicySpec policy;
  int header_bits = kDefaultHeaderBits;
  std::vector<double> hetero_ratios;  // assigned to devices round-robin
};

struct RunResult {
  std::vector<RoundReport> reports;
  std::vector<DeviceState> devices;
  ServerState server;
  double initial_loss = 0.0;
  double final_loss = 0.0;  // f(theta^{K+1})
  std::int64_t total_bits = 0;
  std::int64_t uploads_total = 0;
  std::int64_t clamp_events = 0;
  std::int64_t level_cap_hits = 0;
  bool aborted = false;
  std::string abort_message;
};

// Deterministic given (problem, options). A NumericError stops the loop and is
// reported through `aborted`; rounds completed so far are kept.
RunResult run(const Problem& problem, const RunOptions& options,
              const RoundObserver& observer = {});

// Masks for the configured ratios, or all-absent when there are none.
std::vector<std::optional<Mask>> device_masks(const Problem& problem,
                                              const std::vector<double>& ratios);

}  // namespace aquila
