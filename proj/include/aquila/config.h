// SPDX-License-Identifier: Apache-2.0
//
// Flat "key = value" run configuration. Lines starting with '#' and trailing
// "# ..." are comments. Unknown or repeated keys are errors.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aquila/policy.h"
#include "aquila/problems.h"

namespace aquila {

struct RunConfig {
  std::string problem = "quadratic";  // quadratic | logistic | mlp
  std::int64_t dim = 10;              // quadratic dimension or classifier feature count
  double cond = 10.0;
  double heterogeneity = 1.0;
  std::int64_t classes = 10;
  std::int64_t samples = 2000;
  std::int64_t hidden = 16;
  double separation = 1.0;
  double regularization = 1e-3;

  std::int64_t devices = 10;
  std::int64_t rounds = 100;
  double alpha = 0.1;
  double beta = 0.25;
  PolicySpec level_policy;  // aquila by default
  PartitionSpec partition;
  std::vector<double> hetero_ratios;
  std::uint64_t seed = 1;
  std::int64_t header_bits = 40;

  std::optional<double> gamma;
  std::optional<double> tol;
  std::optional<std::int64_t> reference_rounds;
  std::int64_t fstar_rounds_factor = 10;
  double p = 0.1;
  std::optional<std::string> output_dir;

  bool operator==(const RunConfig&) const = default;
};

// Throws ConfigError naming the line on malformed input or invalid values.
RunConfig parse_config(std::string_view text);
// Throws ConfigError naming the path when it cannot be read.
RunConfig load_config(const std::string& path);
// Every key in a fixed order; parse_config(serialize(c)) == c.
std::string serialize(const RunConfig& config);
// Range checks shared by the parser and programmatic callers.
void validate(const RunConfig& config);

// %.17g.
std::string format_real(double value);

}  // namespace aquila
