// SPDX-License-Identifier: Apache-2.0
#include "aquila/config.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "aquila/errors.h"

namespace aquila {

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_real(std::string_view key, std::string_view text) {
  const std::string buf(text);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size() || !std::isfinite(v)) {
    throw ConfigError("key '" + std::string(key) + "': expected a finite number, got '" + buf + "'");
  }
  return v;
}

std::int64_t to_int(std::string_view key, std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("key '" + std::string(key) + "': expected an integer, got '" +
                      std::string(text) + "'");
  }
  return v;
}

std::vector<double> to_real_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = trim(text.substr(start, comma == std::string_view::npos
                                                   ? std::string_view::npos
                                                   : comma - start));
    out.push_back(to_real(key, piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"problem", [](RunConfig& c, auto, auto v) { c.problem = std::string(v); }},
      {"dim", [](RunConfig& c, auto k, auto v) { c.dim = to_int(k, v); }},
      {"cond", [](RunConfig& c, auto k, auto v) { c.cond = to_real(k, v); }},
      {"heterogeneity", [](RunConfig& c, auto k, auto v) { c.heterogeneity = to_real(k, v); }},
      {"classes", [](RunConfig& c, auto k, auto v) { c.classes = to_int(k, v); }},
      {"samples", [](RunConfig& c, auto k, auto v) { c.samples = to_int(k, v); }},
      {"hidden", [](RunConfig& c, auto k, auto v) { c.hidden = to_int(k, v); }},
      {"separation", [](RunConfig& c, auto k, auto v) { c.separation = to_real(k, v); }},
      {"regularization", [](RunConfig& c, auto k, auto v) { c.regularization = to_real(k, v); }},
      {"devices", [](RunConfig& c, auto k, auto v) { c.devices = to_int(k, v); }},
      {"rounds", [](RunConfig& c, auto k, auto v) { c.rounds = to_int(k, v); }},
      {"alpha", [](RunConfig& c, auto k, auto v) { c.alpha = to_real(k, v); }},
      {"beta", [](RunConfig& c, auto k, auto v) { c.beta = to_real(k, v); }},
      {"level_policy", [](RunConfig& c, auto, auto v) { c.level_policy = parse_policy(v); }},
      {"partition", [](RunConfig& c, auto, auto v) { c.partition = parse_partition(v); }},
      {"hetero_ratios", [](RunConfig& c, auto k, auto v) { c.hetero_ratios = to_real_list(k, v); }},
      {"seed", [](RunConfig& c, auto k, auto v) {
         const auto s = to_int(k, v);
         if (s < 0) throw ConfigError("seed must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"header_bits", [](RunConfig& c, auto k, auto v) { c.header_bits = to_int(k, v); }},
      {"gamma", [](RunConfig& c, auto k, auto v) { c.gamma = to_real(k, v); }},
      {"tol", [](RunConfig& c, auto k, auto v) { c.tol = to_real(k, v); }},
      {"reference_rounds", [](RunConfig& c, auto k, auto v) { c.reference_rounds = to_int(k, v); }},
      {"fstar_rounds_factor",
       [](RunConfig& c, auto k, auto v) { c.fstar_rounds_factor = to_int(k, v); }},
      {"p", [](RunConfig& c, auto k, auto v) { c.p = to_real(k, v); }},
      {"output_dir", [](RunConfig& c, auto, auto v) { c.output_dir = std::string(v); }},
  };
  return table;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void validate(const RunConfig& c) {
  require(c.problem == "quadratic" || c.problem == "logistic" || c.problem == "mlp",
          "problem must be quadratic, logistic or mlp, got '" + c.problem + "'");
  require(c.dim >= 1 && c.dim <= 100000, "dim must be in [1, 100000]");
  require(c.cond >= 1.0, "cond must be >= 1");
  require(c.heterogeneity >= 0.0, "heterogeneity must be >= 0");
  require(c.classes >= 2 && c.classes <= 1000, "classes must be in [2, 1000]");
  require(c.samples >= 1, "samples must be >= 1");
  require(c.hidden >= 1 && c.hidden <= 10000, "hidden must be in [1, 10000]");
  require(c.separation >= 0.0, "separation must be >= 0");
  require(c.regularization >= 0.0, "regularization must be >= 0");
  require(c.devices >= 1 && c.devices <= 10000, "devices must be in [1, 10000]");
  require(c.rounds >= 0, "rounds must be >= 0");
  require(c.alpha > 0.0, "alpha must be > 0");
  require(c.beta >= 0.0, "beta must be >= 0");
  require(c.header_bits >= 0, "header_bits must be >= 0");
  for (double r : c.hetero_ratios) require(r > 0.0 && r <= 1.0, "hetero ratios must lie in (0, 1]");
  require(!c.gamma || *c.gamma >= 1.0, "gamma must be >= 1");
  require(!c.tol || *c.tol > 0.0, "tol must be > 0");
  require(!c.reference_rounds || *c.reference_rounds >= 0, "reference_rounds must be >= 0");
  require(c.fstar_rounds_factor >= 1, "fstar_rounds_factor must be >= 1");
  require(c.p > 0.0, "p must be > 0");
  require(!c.output_dir || !c.output_dir->empty(), "output_dir must not be empty");
  require(c.partition.mode == PartitionSpec::Mode::kIid || c.problem != "quadratic",
          "quadratic problems do not take a noniid partition");
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    }
    try {
      it->second(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  validate(config);
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const RunConfig& c) {
  std::ostringstream out;
  out << "problem = " << c.problem << '\n';
  out << "dim = " << c.dim << '\n';
  out << "cond = " << format_real(c.cond) << '\n';
  out << "heterogeneity = " << format_real(c.heterogeneity) << '\n';
  out << "classes = " << c.classes << '\n';
  out << "samples = " << c.samples << '\n';
  out << "hidden = " << c.hidden << '\n';
  out << "separation = " << format_real(c.separation) << '\n';
  out << "regularization = " << format_real(c.regularization) << '\n';
  out << "devices = " << c.devices << '\n';
  out << "rounds = " << c.rounds << '\n';
  out << "alpha = " << format_real(c.alpha) << '\n';
  out << "beta = " << format_real(c.beta) << '\n';
  out << "level_policy = " << to_string(c.level_policy) << '\n';
  out << "partition = " << to_string(c.partition) << '\n';
  if (!c.hetero_ratios.empty()) {
    out << "hetero_ratios = ";
    for (std::size_t i = 0; i < c.hetero_ratios.size(); ++i) {
      out << (i ? "," : "") << format_real(c.hetero_ratios[i]);
    }
    out << '\n';
  }
  out << "seed = " << c.seed << '\n';
  out << "header_bits = " << c.header_bits << '\n';
  if (c.gamma) out << "gamma = " << format_real(*c.gamma) << '\n';
  if (c.tol) out << "tol = " << format_real(*c.tol) << '\n';
  if (c.reference_rounds) out << "reference_rounds = " << *c.reference_rounds << '\n';
  out << "fstar_rounds_factor = " << c.fstar_rounds_factor << '\n';
  out << "p = " << format_real(c.p) << '\n';
  if (c.output_dir) out << "output_dir = " << *c.output_dir << '\n';
  return out.str();
}

}  // namespace aquila
