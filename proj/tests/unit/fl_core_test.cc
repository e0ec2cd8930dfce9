// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "aquila/errors.h"
#include "aquila/fl_core.h"

namespace aquila {
namespace {

RunOptions options(const char* policy, double alpha, double beta, std::int64_t rounds) {
  RunOptions o;
  o.policy = parse_policy(policy);
  o.alpha = alpha;
  o.beta = beta;
  o.rounds = rounds;
  return o;
}

std::unique_ptr<Problem> small_mlp(std::size_t devices) {
  const Dataset data = make_gaussian_clusters(160, 4, 3, 2.0, 3);
  return std::make_unique<MlpProblem>(partition(data, devices, {PartitionSpec::Mode::kIid, 2, 4}),
                                      6, 0.001, 5);
}

TEST(RoundLoop, SingleDeviceExactStep) {
  const QuadraticProblem p({Vector{1}}, {Vector{0}}, Vector{1});
  const RunResult r = run(p, options("fixed:32", 0.1, 0.0, 0));
  ASSERT_EQ(r.reports.size(), 1u);
  EXPECT_NEAR(r.server.theta[0], 0.9, 1e-15);
  EXPECT_EQ(r.total_bits, 32 + 40);
}

TEST(RoundLoop, SingleDeviceMatchesDecodedGradientStep) {
  const auto p = make_quadratic(5, 3.0, 1, 0.0, 4);
  for (const char* policy : {"aquila", "fixed:2", "fixed:6"}) {
    const RunResult r = run(*p, options(policy, 0.2, 0.0, 0));
    const Vector g = p->global_gradient(p->initial_point());
    const int bits = r.reports[0].devices[0].level;
    const Vector expected = axpy(-0.2, decode(encode(g, bits)), p->initial_point());
    EXPECT_EQ(r.server.theta, expected) << policy;
  }
}

TEST(RoundLoop, ZeroGradientAtStartKeepsModel) {
  const QuadraticProblem p({Vector{1, 2}, Vector{3, 1}}, {Vector{0.5, -1}, Vector{0.5, -1}},
                           Vector{0.5, -1});
  const RunResult r = run(p, options("aquila", 0.1, 0.25, 3));
  EXPECT_EQ(r.server.theta, p.initial_point());
  EXPECT_EQ(r.uploads_total, 2);
  for (std::size_t k = 1; k < r.reports.size(); ++k) {
    for (const DeviceRecord& d : r.reports[k].devices) {
      EXPECT_FALSE(d.uploaded);
      EXPECT_EQ(d.bits, 0);
      EXPECT_EQ(d.level, 1);
    }
  }
}

TEST(RoundLoop, IdenticalDevicesSendIdenticalPayloads) {
  const QuadraticProblem p({Vector{1, 3}, Vector{1, 3}}, {Vector{2, -1}, Vector{2, -1}},
                           Vector{0, 0});
  const RunResult r = run(p, options("fixed:3", 0.1, 0.1, 20));
  for (const RoundReport& rep : r.reports) {
    EXPECT_EQ(rep.devices[0].bits, rep.devices[1].bits);
    EXPECT_EQ(rep.devices[0].range, rep.devices[1].range);
  }
  EXPECT_EQ(r.devices[0].q_prev, r.devices[1].q_prev);
  EXPECT_EQ(r.server.q_avg, r.devices[0].q_prev);
}

TEST(Server, ApplyOneUploadOneSkip) {
  const std::vector<std::optional<Mask>> masks(2);
  ServerState s = make_server(Vector{0, 0}, 0.5, masks);
  server_apply(s, {Vector{2, 0}, std::nullopt});
  EXPECT_EQ(s.q_avg, (Vector{1, 0}));
  EXPECT_EQ(s.theta, (Vector{-0.5, 0}));
  EXPECT_EQ(s.theta_prev, (Vector{0, 0}));
  EXPECT_EQ(s.round, 1);

  // No uploads: pure reuse of the stored average.
  server_apply(s, {std::nullopt, std::nullopt});
  EXPECT_EQ(s.theta, (Vector{-1.0, 0}));
}

TEST(Server, UpdateDecodesPayloads) {
  const std::vector<std::optional<Mask>> masks(2);
  ServerState s = make_server(Vector{0, 0}, 0.5, masks);
  server_update(s, {{0, encode(Vector{2, -2}, 1)}});
  EXPECT_EQ(s.mirrors[0], (Vector{2, -2}));
  EXPECT_EQ(s.theta, (Vector{-0.5, 0.5}));
}

TEST(Server, RejectsBadPayloads) {
  const std::vector<std::optional<Mask>> masks{std::nullopt, Mask{0}};
  ServerState s = make_server(Vector{0, 0}, 0.5, masks);
  EXPECT_THROW(server_update(s, {{0, encode(Vector{1, 2, 3}, 4)}}), DimensionError);
  EXPECT_THROW(server_update(s, {{1, encode(Vector{1, 2}, 4)}}), DimensionError);
  EXPECT_THROW(server_update(s, {{2, encode(Vector{1, 2}, 4)}}), DimensionError);
  EXPECT_THROW(server_update(s, {{0, QuantizedInnovation{{9, 0}, 2, 1.0}}}), PolicyError);
  EXPECT_THROW(server_apply(s, {std::nullopt}), DimensionError);
  EXPECT_THROW(make_server(Vector{0}, 0.0, masks), ConfigError);
  EXPECT_THROW(make_server(Vector{0}, 0.1, {}), ConfigError);
}

TEST(RoundLoop, ServerAverageEqualsDeviceVectorsEveryRound) {
  const auto p = make_quadratic(8, 4.0, 6, 1.0, 3);
  RunOptions o = options("aquila-ceil", 0.1, 0.5, 60);
  std::int64_t checked = 0;
  const RunResult r = run(*p, o, [&](const RoundTrace& t) {
    // theta^{k+1} = theta^k - alpha * (1/M) sum_m q_m^k with q_m^k the device's
    // vector after this round.
    Vector sum(p->dim());
    for (const DeviceTrace& d : t.devices) {
      const Vector q = d.uploaded ? add(d.q_prev_before, d.dq) : d.q_prev_before;
      axpy_inplace(1.0, q, sum);
    }
    const Vector expected = axpy(-t.alpha / 6.0, sum, t.theta);
    for (std::size_t i = 0; i < p->dim(); ++i) {
      ASSERT_NEAR(t.theta_next[i], expected[i], 1e-13 * (1.0 + std::abs(expected[i])));
    }
    ++checked;
  });
  EXPECT_EQ(checked, 61);
  for (std::size_t m = 0; m < 6; ++m) EXPECT_EQ(r.server.mirrors[m], r.devices[m].q_prev);
  EXPECT_GT(r.uploads_total, 6);
  EXPECT_LT(r.uploads_total, 6 * 61);
}

TEST(RoundLoop, BitAccounting) {
  const auto p = make_quadratic(7, 4.0, 5, 1.0, 8);
  const RunResult r = run(*p, options("aquila-ceil", 0.1, 0.3, 40));
  std::int64_t from_reports = 0;
  std::int64_t uploads = 0;
  for (const RoundReport& rep : r.reports) {
    for (const DeviceRecord& d : rep.devices) {
      from_reports += d.bits;
      uploads += d.uploaded;
      if (d.uploaded) {
        EXPECT_EQ(d.bits, 7 * d.level + 40);
      } else {
        EXPECT_EQ(d.bits, 0);
      }
    }
  }
  std::int64_t from_devices = 0;
  for (const DeviceState& d : r.devices) from_devices += d.bits_sent;
  EXPECT_EQ(r.total_bits, from_reports);
  EXPECT_EQ(r.total_bits, from_devices);
  EXPECT_EQ(r.uploads_total, uploads);
}

TEST(RoundLoop, RoundZeroAlwaysUploads) {
  const auto p = make_quadratic(4, 2.0, 3, 1.0, 1);
  const RunResult r = run(*p, options("fixed:4", 0.1, 1e6, 0));
  ASSERT_EQ(r.reports.size(), 1u);
  for (const DeviceRecord& d : r.reports[0].devices) EXPECT_TRUE(d.uploaded);
}

TEST(RoundLoop, HugeBetaReusesRoundZeroDirection) {
  const auto p = make_quadratic(4, 2.0, 3, 1.0, 1);
  const RunResult r = run(*p, options("fixed:8", 0.1, 1e12, 9));
  EXPECT_EQ(r.uploads_total, 3);
  const Vector expected = axpy(-0.1 * 10, r.server.q_avg, p->initial_point());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.server.theta[i], expected[i], 1e-12);
}

TEST(RoundLoop, FullParticipationIgnoresBeta) {
  const auto p = make_quadratic(4, 2.0, 3, 1.0, 1);
  const RunResult r = run(*p, options("fixed:32-full", 0.1, 1e12, 9));
  EXPECT_EQ(r.uploads_total, 30);
}

TEST(RoundLoop, ExactQuantizationTracksGradientDescent) {
  const auto p = make_quadratic(10, 4.0, 8, 1.0, 12);
  const RunResult r = run(*p, options("fixed:32-full", 0.1, 0.0, 99));
  Vector theta = p->initial_point();
  for (int k = 0; k < 100; ++k) theta = axpy(-0.1, p->global_gradient(theta), theta);
  EXPECT_LE(norm2(subtract(r.server.theta, theta)), 1e-6 * norm2(theta));
}

TEST(DeviceStep, ZeroInnovationSkips) {
  const auto p = make_quadratic(3, 2.0, 2, 1.0, 2);
  std::vector<DeviceState> devices = make_devices(3, {std::nullopt, std::nullopt});
  const Vector theta{0.2, -0.4, 1.0};
  devices[0].q_prev = p->local_gradient(0, theta);
  const Vector before = devices[0].q_prev;
  const DeviceStepResult r = device_step(devices[0], *p, theta, 0.0, LevelPolicy::aquila(),
                                         {0.0, 0.1}, {});
  EXPECT_FALSE(r.payload.has_value());
  EXPECT_FALSE(r.record.uploaded);
  EXPECT_EQ(r.record.bits, 0);
  EXPECT_EQ(r.record.level, 1);
  EXPECT_EQ(r.record.range, 0.0);
  EXPECT_EQ(devices[0].q_prev, before);
  EXPECT_EQ(devices[0].uploads, 0);
}

TEST(DeviceStep, BetaZeroUploadsOffLattice) {
  const auto p = make_quadratic(3, 2.0, 2, 1.0, 2);
  std::vector<DeviceState> devices = make_devices(3, {std::nullopt, std::nullopt});
  const DeviceStepResult r = device_step(devices[1], *p, Vector{0.1, 0.2, 0.3}, 5.0,
                                         LevelPolicy::fixed(4), {0.0, 0.1}, {});
  ASSERT_TRUE(r.payload.has_value());
  EXPECT_EQ(r.record.bits, 3 * 4 + 40);
  EXPECT_EQ(devices[1].q_prev, decode(*r.payload));
}

TEST(DeviceStep, NonFiniteGradient) {
  const QuadraticProblem p({Vector{1}}, {Vector{0}}, Vector{0});
  std::vector<DeviceState> devices = make_devices(1, {std::nullopt});
  EXPECT_THROW(device_step(devices[0], p, Vector{INFINITY}, 0.0, LevelPolicy::fixed(4),
                           {0.0, 0.1}, {}),
               NumericError);
}

TEST(RoundLoop, ZeroRoundsRunsBootstrapOnly) {
  const auto p = make_quadratic(4, 2.0, 3, 1.0, 1);
  const RunResult r = run(*p, options("aquila", 0.1, 0.25, 0));
  EXPECT_EQ(r.reports.size(), 1u);
  EXPECT_EQ(r.final_loss, p->global_loss(r.server.theta));
}

TEST(RoundLoop, Deterministic) {
  const auto p = small_mlp(4);
  const RunOptions o = options("aquila", 0.1, 0.05, 30);
  const RunResult a = run(*p, o);
  const RunResult b = run(*p, o);
  EXPECT_EQ(a.server.theta, b.server.theta);
  EXPECT_EQ(a.total_bits, b.total_bits);
  ASSERT_EQ(a.reports.size(), b.reports.size());
  for (std::size_t k = 0; k < a.reports.size(); ++k) {
    EXPECT_EQ(a.reports[k].global.loss, b.reports[k].global.loss);
    for (std::size_t m = 0; m < 4; ++m) {
      EXPECT_EQ(a.reports[k].devices[m].bits, b.reports[k].devices[m].bits);
      EXPECT_EQ(a.reports[k].devices[m].range, b.reports[k].devices[m].range);
    }
  }
}

TEST(RoundLoop, HeteroSlicesAveragePerCoordinate) {
  const auto p = small_mlp(4);
  RunOptions o = options("fixed:8", 0.1, 0.1, 20);
  o.hetero_ratios = {1.0, 0.5};
  const RunResult r = run(*p, o);
  ASSERT_FALSE(r.aborted);
  const Mask mask = make_hetero_mask(*p, 0.5);
  EXPECT_FALSE(r.devices[0].mask.has_value());
  ASSERT_TRUE(r.devices[1].mask.has_value());
  EXPECT_EQ(*r.devices[1].mask, mask);

  std::vector<bool> inside(p->dim(), false);
  for (std::size_t i : mask) inside[i] = true;
  for (std::size_t i = 0; i < p->dim(); ++i) {
    if (!inside[i]) {
      EXPECT_EQ(r.devices[1].q_prev[i], 0.0);
      EXPECT_EQ(r.server.coverage[i], 2u);
    } else {
      EXPECT_EQ(r.server.coverage[i], 4u);
    }
    double sum = 0.0;
    for (const DeviceState& d : r.devices) sum += d.q_prev[i];
    EXPECT_NEAR(r.server.q_avg[i], sum / r.server.coverage[i], 1e-12);
  }
  for (const RoundReport& rep : r.reports) {
    if (rep.devices[1].uploaded) {
      EXPECT_EQ(rep.devices[1].bits, static_cast<std::int64_t>(mask.size()) * 8 + 40);
    }
  }
}

TEST(RoundLoop, DivergenceAbortsWithPartialReports) {
  const auto p = make_quadratic(4, 4.0, 2, 1.0, 1);
  const RunResult r = run(*p, options("fixed:32-full", 1e3, 0.0, 500));
  EXPECT_TRUE(r.aborted);
  EXPECT_FALSE(r.abort_message.empty());
  EXPECT_GT(r.reports.size(), 0u);
  EXPECT_LT(r.reports.size(), 501u);
}

TEST(RoundLoop, RejectsBadOptions) {
  const auto p = make_quadratic(2, 2.0, 2, 1.0, 1);
  EXPECT_THROW(run(*p, options("aquila", 0.1, -1.0, 3)), ConfigError);
  EXPECT_THROW(run(*p, options("aquila", 0.0, 0.0, 3)), ConfigError);
  EXPECT_THROW(run(*p, options("aquila", 0.1, 0.0, -1)), ConfigError);
}

TEST(RoundLoop, AdaQuantFlLevelsGrowAsLossFalls) {
  const auto p = make_quadratic(6, 3.0, 4, 0.0, 6);
  const RunResult r = run(*p, options("adaquantfl:2", 0.1, 0.0, 40));
  EXPECT_EQ(r.reports[0].devices[0].level, 2);
  EXPECT_GT(r.reports.back().devices[0].level, 2);
}

}  // namespace
}  // namespace aquila
