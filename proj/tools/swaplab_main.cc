// swaplab: command-line front end for the swapping / ToyDown harness.
//
// Exit codes: 0 success, 2 configuration or input error, 3 some mechanism
// cells failed, 4 I/O error, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "swaplab/csv.h"
#include "swaplab/errors.h"
#include "swaplab/harness.h"
#include "swaplab/run_config.h"

namespace {

using namespace swaplab;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 4;

struct GlobalFlags {
  std::optional<uint64_t> seed;
  int jobs = 1;
  std::string out;
};

RunConfig load_with_overrides(const std::string& path, const GlobalFlags& g) {
  RunConfig config = load_run_config(path);
  if (g.seed) config.base_seed = *g.seed;
  if (!g.out.empty()) config.output_dir = g.out;
  return config;
}

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (c == ':' || c == '/' || c == '\\') c = '_';
  }
  return s;
}

int cmd_run(const std::string& path, const GlobalFlags& g) {
  RunConfig config = load_with_overrides(path, g);
  PipelineResult result = run_pipeline(config, g.jobs);
  for (const auto& cell : result.cells) {
    if (!cell.ok) {
      std::cerr << "swaplab: " << cell.mechanism << " replicate "
                << cell.replicate << " failed: " << cell.error << "\n";
    }
  }
  std::cout << "wrote " << result.files.size() << " files to "
            << config.output_dir.string() << "\n";
  return result.exit_code();
}

int cmd_delta(const std::string& path, const std::string& statistic,
              int replicates, const std::string& mechanism,
              const GlobalFlags& g) {
  RunConfig config = load_with_overrides(path, g);
  DeltaReport report =
      estimate_delta(config, statistic, replicates, mechanism, g.jobs);
  const std::string stem = "delta/" + file_safe(statistic) + "." +
                           report.mechanism;
  write_file_atomic(config.output_dir / (stem + ".csv"), delta_csv(report));
  const std::string summary = delta_summary_csv(report);
  write_file_atomic(config.output_dir / (stem + ".summary.csv"), summary);
  std::cout << summary;
  return kExitOk;
}

int cmd_sweep(const std::string& path, const std::vector<double>& rates,
              int runs, const std::string& variant,
              std::optional<double> epsilon, bool identical,
              const GlobalFlags& g) {
  RunConfig config = load_with_overrides(path, g);
  SweepOptions options;
  options.rates = rates;
  options.runs_per_point = runs;
  options.identical_pairs = identical;
  for (const auto& m : config.mechanisms) {
    if (m.is_swap) {
      options.swap = m.swap;
      break;
    }
  }
  for (const auto& m : config.mechanisms) {
    if (!m.is_swap) {
      options.toydown_ref = m.toydown;
      break;
    }
  }
  if (!variant.empty()) options.swap = swap_variant(variant);
  if (epsilon) options.toydown_ref.epsilon_total = *epsilon;

  SweepReport report =
      variance_sweep(load_input(config), config.base_seed, options, g.jobs);
  write_file_atomic(config.output_dir / "sweep.csv", sweep_csv(report));
  const std::string summary = sweep_summary_csv(report);
  write_file_atomic(config.output_dir / "sweep_summary.csv", summary);
  std::cout << summary;
  return kExitOk;
}

int cmd_gen(const std::string& path, const std::string& out_dir,
            const GlobalFlags& g) {
  SyntheticInput in = load_synthetic_config(path);
  if (g.seed) in.seed = *g.seed;
  const std::string dir = out_dir.empty() ? g.out : out_dir;
  if (dir.empty()) throw ConfigError("gen needs an output directory (-o)");
  Microdata md = generate_synthetic(in.params, in.seed);
  const std::filesystem::path root = dir;
  write_file_atomic(root / "households.csv", households_csv(md));
  write_file_atomic(root / "geography.csv", geography_csv(md.geo()));
  std::cout << "wrote " << md.size() << " households to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Household swapping and ToyDown comparison harness"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  uint64_t seed = 0;
  auto* seed_opt =
      app.add_option("--seed", seed, "Override the base seed");
  app.add_option("--jobs", g.jobs, "Concurrent mechanism x replicate cells")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Override the output directory");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run every configured mechanism");
  run->add_option("config", config_path, "Run configuration (YAML)")
      ->required();

  std::string statistic;
  std::string mechanism;
  int replicates = 100;
  auto* delta = app.add_subcommand(
      "delta", "Estimate bias and variance of a statistic under a mechanism");
  delta->add_option("config", config_path, "Run configuration (YAML)")
      ->required();
  delta->add_option("--statistic", statistic, "Registered statistic name")
      ->required();
  delta->add_option("--replicates", replicates, "Mechanism runs (>= 2)")
      ->capture_default_str();
  delta->add_option("--mechanism", mechanism,
                    "Mechanism name (default: the first configured)");

  std::vector<double> rates;
  int runs = 5;
  std::string variant;
  double epsilon = 0.0;
  bool identical = false;
  auto* sweep = app.add_subcommand(
      "sweep", "Swap variance across rates with a ToyDown reference line");
  sweep->add_option("config", config_path, "Run configuration (YAML)")
      ->required();
  sweep->add_option("--rates", rates, "Comma-separated swap rates")
      ->required()
      ->delimiter(',');
  sweep->add_option("--runs", runs, "Estimator runs per point")
      ->capture_default_str();
  sweep->add_option("--variant", variant, "standard or high_variance");
  auto* eps_opt = sweep->add_option("--epsilon", epsilon,
                                    "ToyDown reference epsilon");
  sweep->add_flag("--identical-pairs", identical,
                  "Reuse one seed per pair (degenerate control)");

  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Write a synthetic population");
  gen->add_option("synth_config", config_path, "Synthetic configuration")
      ->required();
  gen->add_option("-o,--output", gen_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*run) return cmd_run(config_path, g);
    if (*delta) {
      return cmd_delta(config_path, statistic, replicates, mechanism, g);
    }
    if (*sweep) {
      std::optional<double> eps;
      if (*eps_opt) eps = epsilon;
      return cmd_sweep(config_path, rates, runs, variant, eps, identical, g);
    }
    if (*gen) return cmd_gen(config_path, gen_out, g);
  } catch (const ConfigError& e) {
    // what() already carries the line number when there is one.
    std::cerr << "swaplab: config error in " << config_path << ": "
              << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "swaplab: input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RegistryError& e) {
    std::cerr << "swaplab: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "swaplab: I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "swaplab: invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const GeographyError& e) {
    std::cerr << "swaplab: invalid geography: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "swaplab: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
