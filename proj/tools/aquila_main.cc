// SPDX-License-Identifier: Apache-2.0
//
// aquila run <config> [--strict] [--out DIR] [--dump-data PATH]
// aquila compare <config> --policies a,b,c [--tol T] [--out DIR]
// aquila sweep-beta <config> --betas 0,0.1,0.25,1.25 [--tol T] [--out DIR]
//
// Exit codes: 0 ok, 2 config error, 3 numeric abort or I/O failure,
// 4 certificate FAIL under --strict.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aquila/config.h"
#include "aquila/errors.h"
#include "aquila/experiment.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitStrict = 4;

std::string output_dir(const std::string& flag, const aquila::RunConfig& config) {
  if (!flag.empty()) return flag;
  if (config.output_dir) return *config.output_dir;
  if (const char* env = std::getenv("AQUILA_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "out";
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_run(const std::string& path, bool strict, const std::string& out_flag,
            const std::string& dump_path) {
  const aquila::RunConfig config = aquila::load_config(path);
  const aquila::Experiment experiment = aquila::build_experiment(config);
  if (!dump_path.empty()) {
    const auto* clf = dynamic_cast<const aquila::ClassifierProblem*>(experiment.problem.get());
    if (clf == nullptr) throw aquila::ConfigError("--dump-data needs a logistic or mlp problem");
    std::ofstream out(dump_path, std::ios::binary | std::ios::trunc);
    if (!out) throw aquila::IoError("cannot open '" + dump_path + "' for writing");
    aquila::write_dataset_csv(out, clf->shards());
  }

  const aquila::RunOutcome outcome = aquila::execute(experiment);
  const std::string dir = output_dir(out_flag, config);
  aquila::write_run_outputs(dir, experiment, outcome);

  std::printf("policy %s  rounds %zu  final_loss %.10g  total_bits %lld  uploads %lld\n",
              outcome.policy.c_str(), outcome.run.reports.size(), outcome.run.final_loss,
              static_cast<long long>(outcome.run.total_bits),
              static_cast<long long>(outcome.run.uploads_total));
  for (const auto& [name, cert] : outcome.monitor.certificates) {
    std::printf("  %-24s %s\n", name.c_str(), std::string(aquila::to_string(cert.status)).c_str());
  }
  std::printf("outputs in %s\n", dir.c_str());

  if (outcome.run.aborted) {
    std::fprintf(stderr, "numeric abort: %s\n", outcome.run.abort_message.c_str());
    return kExitRuntime;
  }
  if (strict && outcome.monitor.any_fail()) return kExitStrict;
  return kExitOk;
}

int cmd_compare(const std::string& path, const std::string& policies_text, double tol_flag,
                const std::string& out_flag) {
  const aquila::RunConfig config = aquila::load_config(path);
  std::vector<aquila::PolicySpec> policies;
  for (const std::string& p : split_list(policies_text)) policies.push_back(aquila::parse_policy(p));
  if (policies.size() < 2) throw aquila::ConfigError("compare needs at least two policies");

  const aquila::Experiment experiment = aquila::build_experiment(config);
  const double tol = tol_flag > 0.0 ? tol_flag : aquila::tolerance(experiment);
  const auto rows = aquila::compare_policies(experiment, policies, tol);

  std::ostringstream csv;
  aquila::write_compare_csv(csv, rows);
  const std::string dir = output_dir(out_flag, config);
  aquila::write_file(dir, "compare.csv", csv.str());
  std::printf("f_star %.17g  tol %.17g\n", experiment.f_star, tol);
  std::fputs(csv.str().c_str(), stdout);
  return kExitOk;
}

int cmd_sweep(const std::string& path, const std::string& betas_text, double tol_flag,
              const std::string& out_flag) {
  const aquila::RunConfig config = aquila::load_config(path);
  std::vector<double> betas;
  for (const std::string& b : split_list(betas_text)) {
    char* end = nullptr;
    const double v = std::strtod(b.c_str(), &end);
    if (end != b.c_str() + b.size() || !(v >= 0.0)) {
      throw aquila::ConfigError("bad beta '" + b + "'");
    }
    betas.push_back(v);
  }
  if (betas.empty()) throw aquila::ConfigError("--betas is empty");

  const aquila::Experiment experiment = aquila::build_experiment(config);
  const double tol = tol_flag > 0.0 ? tol_flag : aquila::tolerance(experiment);
  const auto rows = aquila::sweep_beta(experiment, betas, tol);

  std::ostringstream csv;
  aquila::write_sweep_csv(csv, rows);
  const std::string dir = output_dir(out_flag, config);
  aquila::write_file(dir, "sweep.csv", csv.str());
  std::printf("f_star %.17g  tol %.17g\n", experiment.f_star, tol);
  std::fputs(csv.str().c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with adaptive quantization and lazy aggregation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool strict = false;
  std::string dump_path;
  std::string policies;
  std::string betas;
  double tol = 0.0;

  auto* run = app.add_subcommand("run", "Run one configuration and write rounds.csv, "
                                        "summary.json and certificates.json");
  run->add_option("config", config_path, "Config file")->required();
  run->add_flag("--strict", strict, "Exit 4 when any certificate FAILs");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--dump-data", dump_path, "Write the partitioned dataset as CSV");

  auto* compare = app.add_subcommand("compare", "Run several level policies on one problem");
  compare->add_option("config", config_path, "Config file")->required();
  compare->add_option("--policies", policies, "Comma-separated policies")->required();
  compare->add_option("--tol", tol, "Gap tolerance for rounds_to_tol");
  compare->add_option("--out", out_dir, "Output directory");

  auto* sweep = app.add_subcommand("sweep-beta", "Run the configured policy for several betas");
  sweep->add_option("config", config_path, "Config file")->required();
  sweep->add_option("--betas", betas, "Comma-separated beta values")->required();
  sweep->add_option("--tol", tol, "Gap tolerance for rounds_to_tol");
  sweep->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, strict, out_dir, dump_path);
    if (compare->parsed()) return cmd_compare(config_path, policies, tol, out_dir);
    return cmd_sweep(config_path, betas, tol, out_dir);
  } catch (const aquila::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const aquila::PolicyError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const aquila::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
