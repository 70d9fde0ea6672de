// gis: Monte Carlo runner, config validator and integrator oracle.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gis/experiment.hpp"
#include "gis/oracle.hpp"

namespace {

constexpr int kUsageError = 2;

void print_summary(const gis::RmseReport& report) {
  std::printf("%-6s %-9s", "method", "kind");
  for (std::size_t i = 1; i <= report.state_dim; ++i) std::printf(" %12s", ("state" + std::to_string(i)).c_str());
  std::printf(" %8s %9s\n", "ret", "diverged");
  for (const auto& mr : report.methods) {
    if (!mr.present) {
      std::printf("%-6s absent: all %d runs diverged (%s)\n", mr.method.c_str(), mr.diverged,
                  mr.diagnostic.c_str());
      continue;
    }
    for (const bool smoother : {false, true}) {
      std::printf("%-6s %-9s", mr.method.c_str(), smoother ? "smoother" : "filter");
      const auto& avg = smoother ? mr.smoother_average : mr.filter_average;
      for (Eigen::Index i = 0; i < avg.size(); ++i) std::printf(" %12.6g", avg(i));
      std::printf(" %8.3f %9d\n", smoother ? mr.smoother_ret : mr.filter_ret, mr.diverged);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-integral filtering and smoothing experiments"};
  app.require_subcommand(1);

  std::string config_path;
  int runs = 0;
  long long seed = -1;
  std::string out_dir;
  std::string strategies;
  auto* run = app.add_subcommand("run", "run the Monte Carlo study and write CSV reports");
  run->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("--runs", runs, "override the number of runs")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "override the master seed")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out_dir, "override the output directory");
  run->add_option("--strategies", strategies, "comma-separated subset of gi,ckf,ukf,ekf");

  auto* validate = app.add_subcommand("validate", "check a config and print the effective values");
  validate->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);

  std::size_t dim = 3;
  std::uint32_t degree = 6;
  int cases = 200;
  std::uint64_t oracle_seed = 1;
  auto* oracle = app.add_subcommand("oracle", "compare exact expectations with quadrature");
  oracle->add_option("--dim", dim, "state dimension")->check(CLI::Range(1, 6));
  oracle->add_option("--degree", degree, "maximum total degree")->check(CLI::Range(0, 12));
  oracle->add_option("--cases", cases, "number of random cases")->check(CLI::PositiveNumber);
  oracle->add_option("--seed", oracle_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*validate) {
      const auto cfg = gis::load_config(config_path);
      gis::validate(cfg);
      std::cout << gis::config_echo(cfg);
      return 0;
    }
    if (*run) {
      auto cfg = gis::load_config(config_path);
      if (runs > 0) cfg.runs = runs;
      if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
      if (!out_dir.empty()) cfg.out = out_dir;
      if (!strategies.empty()) cfg.strategies = gis::detail::split_list(strategies);
      const auto report = gis::run_experiment(cfg);
      gis::write_reports(report, cfg, cfg.out);
      print_summary(report);
      std::printf("reports written to %s\n", cfg.out.c_str());
      return 0;
    }
    if (*oracle) {
      gis::oracle::OracleOptions opt;
      opt.min_dim = opt.max_dim = dim;
      opt.max_degree = degree;
      opt.cases = cases;
      opt.seed = oracle_seed;
      const auto summary = gis::oracle::run_oracle(opt);
      const bool ok = summary.max_relative_error <= 1e-8;
      std::printf("cases %d  max relative error %.3e  %s\n", summary.cases,
                  summary.max_relative_error, ok ? "ok" : "above 1e-8");
      return ok ? 0 : 1;
    }
  } catch (const gis::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsageError;
}
