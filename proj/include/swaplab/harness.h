#ifndef SWAPLAB_HARNESS_H_
#define SWAPLAB_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "swaplab/ecoreg.h"
#include "swaplab/geodata.h"
#include "swaplab/random.h"
#include "swaplab/run_config.h"
#include "swaplab/toydown.h"

namespace swaplab {

// Seed of replicate |replicate| of mechanism |name|.
inline uint64_t cell_seed(const RunConfig& config, const std::string& name,
                          int replicate) {
  return derive_seed(config.base_seed, name, static_cast<uint64_t>(replicate));
}

struct CellResult {
  std::string mechanism;
  int replicate = 0;
  uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::vector<std::string> files;  // relative to the output directory
};

struct PipelineResult {
  std::vector<CellResult> cells;  // mechanism-major, replicate-minor
  std::vector<std::string> failed_mechanisms;
  std::vector<std::string> files;  // every file written, sorted

  // 0 when every cell succeeded, 3 otherwise.
  int exit_code() const { return failed_mechanisms.empty() ? 0 : 3; }
};

// Runs every mechanism x replicate cell (up to |jobs| at a time) and writes
// the selected reports plus manifest.json under config.output_dir:
//
//   manifest.json
//   original/{block_table,precincts,er}.csv
//   <mechanism>/summary.csv, <mechanism>/variance.csv
//   <mechanism>/rep<NNN>/{swap_log,error_table,block_table,entropy,
//       size_distribution,target_race,partner_matrix,rucc_rows,rucc_groups,
//       er}.csv
//
// A failing cell is recorded in the manifest and the result; the remaining
// cells still run. File contents do not depend on |jobs|. Throws IoError when
// a report cannot be written.
PipelineResult run_pipeline(const RunConfig& config, int jobs = 1);

// Holds votes fixed across mechanisms; built once from the original data.
Election build_election(const Microdata& md, const ElectionSpec& spec);

// A scalar s(X, Z) of a block-level race table X and auxiliary data Z.
struct StatisticContext {
  const GeoHierarchy* geo = nullptr;
  const Election* election = nullptr;  // null without an election section
};
using StatisticFn =
    std::function<double(const RegionTable& blocks, const StatisticContext&)>;

// Built-in statistics, addressed by name:
//   state_count:<race>
//   county_count:<county_id>:<race>
//   tract_entropy_mean
//   er_slope:<race>:<candidate>            (candidate numbered from 1)
//   er_slope_weighted:<race>:<candidate>
// Races accept the CSV code or the table label.
class StatisticRegistry {
 public:
  static const StatisticRegistry& builtin();

  // Throws RegistryError listing the available names.
  StatisticFn resolve(const std::string& name) const;
  std::vector<std::string> available() const;

 private:
  StatisticRegistry() = default;
};

struct DeltaReport {
  std::string statistic;
  std::string mechanism;
  double original = 0.0;           // s(original, Z)
  std::vector<uint64_t> seeds;     // per replicate
  std::vector<double> deltas;      // s(protected, Z) - s(original, Z)
  double mean = 0.0;               // bias estimate
  double variance = 0.0;           // sample variance (n - 1)
  double min = 0.0;
  double max = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;

  // Observed statistic corrected for the estimated bias.
  double debias(double observed) const { return observed - mean; }
};

// Runs |mechanism| (the first configured one when empty) |replicates| times
// with seeds cell_seed(config, mechanism, i). Throws RegistryError for an
// unknown statistic and ConfigError for replicates < 2, an unknown mechanism
// or an ER statistic without an election.
DeltaReport estimate_delta(const RunConfig& config, const Microdata& md,
                           const std::string& statistic, int replicates,
                           const std::string& mechanism = "", int jobs = 1);
DeltaReport estimate_delta(const RunConfig& config,
                           const std::string& statistic, int replicates,
                           const std::string& mechanism = "", int jobs = 1);

// replicate,seed,delta
std::string delta_csv(const DeltaReport& report);
// statistic,mechanism,replicates,original,mean,variance,min,q05,q50,q95,max,
// correction. correction = -mean is added to an observed protected value.
std::string delta_summary_csv(const DeltaReport& report);

// Linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double q);

struct VarianceSummary {
  std::vector<double> estimates;  // one per estimator run
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};
VarianceSummary summarize(std::vector<double> estimates);

struct SweepOptions {
  std::vector<double> rates;
  int runs_per_point = 5;
  // Swap parameters other than the rate; seed is ignored.
  SwapConfig swap = swap_variant("standard");
  ToyDownConfig toydown_ref;
  // Reuses the first run's seed for the second run of every pair.
  bool identical_pairs = false;
};

struct SweepPoint {
  double rate = 0.0;
  VarianceSummary variance;
};

struct SweepReport {
  std::vector<SweepPoint> points;
  double toydown_epsilon = 0.0;
  VarianceSummary toydown;
};

// Estimator run j at rate r compares two swaps seeded with
// derive_seed(base_seed, "sweep:<r>", 2j) and (.., 2j + 1). The reference
// line uses the stream "sweep:toydown". Throws ConfigError for a rate
// outside (0, 1) or runs_per_point < 1.
SweepReport variance_sweep(const Microdata& md, uint64_t base_seed,
                           const SweepOptions& options, int jobs = 1);

// series,rate,run,variance_estimate (series is "swap" or "toydown"; the
// toydown rate column holds epsilon)
std::string sweep_csv(const SweepReport& report);
// series,rate,min,median,max
std::string sweep_summary_csv(const SweepReport& report);

// Calls fn(i) for i in [0, n) on up to |jobs| threads. The first exception
// thrown is rethrown after every worker stops.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

}  // namespace swaplab

#endif  // SWAPLAB_HARNESS_H_
