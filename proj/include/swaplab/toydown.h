#ifndef SWAPLAB_TOYDOWN_H_
#define SWAPLAB_TOYDOWN_H_

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "swaplab/geodata.h"

namespace swaplab {

using RaceVector = std::array<double, kNumRaces>;

// Per-race counts on the state -> county -> tract -> block tree. Node indices
// follow the geography; children come from GeoHierarchy::children().
struct CountTree {
  std::shared_ptr<const GeoHierarchy> geo;
  std::array<std::vector<RaceVector>, 4> levels;  // indexed by Level

  std::vector<RaceVector>& at(Level l) { return levels[static_cast<int>(l)]; }
  const std::vector<RaceVector>& at(Level l) const {
    return levels[static_cast<int>(l)];
  }
};

// Privacy budget used when calibrating against the production system's
// demonstration data; the default for shipped configs.
inline constexpr double kReferenceEpsilon = 3.26;

struct ToyDownConfig {
  double epsilon_total = kReferenceEpsilon;
  // Budget share per level (state, county, tract, block).
  std::array<double, 4> level_weights = {0.25, 0.25, 0.25, 0.25};
  uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

CountTree build_tree(const Microdata& md);

// Adds Laplace(1 / (w_l * epsilon_total)) noise to every race count of every
// node. Draws are consumed level by level (state first), then by node index,
// then by race index.
CountTree add_noise(const CountTree& tree, const ToyDownConfig& cfg);

// Makes a noisy tree consistent and non-negative, top-down: the root is
// clamped at zero, each set of siblings is projected (per race, in L2) onto
// {x >= 0, sum x = parent}, and block values are rounded by largest
// remainder within each tract. Internal nodes of the result are the exact
// sums of their children.
CountTree postprocess(const CountTree& noisy);

// Euclidean projection of |noisy| onto {y >= 0, sum y = total} by
// water-filling: subtract a uniform correction over the unclamped entries,
// clamp negatives to zero, and repeat until nothing new is clamped.
std::vector<double> project_to_simplex(std::span<const double> noisy,
                                       double total);

// Non-negative integers summing to |total|: floors first, then one extra unit
// to the entries with the largest fractional parts (ties to the lower index).
// |values| must be non-negative with total - sum(floor) in [0, size].
std::vector<int64_t> largest_remainder_round(std::span<const double> values,
                                             int64_t total);

// Block-level table of a finalized tree.
RegionTable leaf_table(const CountTree& finalized);

// Builds the tree once and reuses it across runs.
class ToyDown {
 public:
  explicit ToyDown(const Microdata& md);

  const CountTree& tree() const { return tree_; }
  // build_tree -> add_noise -> postprocess, returning the block table.
  RegionTable run(const ToyDownConfig& cfg) const;

 private:
  CountTree tree_;
};

RegionTable run_toydown(const Microdata& md, const ToyDownConfig& cfg);

// block_id,w,b,aian,as,hpi,oth,two_plus
std::string block_table_csv(const RegionTable& table);

// Mean of the two-run variance estimator over |paired_runs| independent
// pairs of ToyDown runs at |epsilon|. Pair j uses seeds derived from
// (seed, j) only, so the same pairs are reused across epsilon values.
double toydown_variance(const ToyDown& toydown, double epsilon,
                        int paired_runs, uint64_t seed,
                        const std::array<double, 4>& level_weights = {
                            0.25, 0.25, 0.25, 0.25});

struct CalibrationOptions {
  double epsilon_lo = 0.1;
  double epsilon_hi = 100.0;
  double tolerance = 0.05;  // relative
  int paired_runs = 5;
  int max_iterations = 60;
  uint64_t seed = 0;
};

struct CalibrationResult {
  double epsilon = 0.0;
  double achieved_variance = 0.0;
  bool converged = false;
  std::vector<std::pair<double, double>> probes;  // (epsilon, variance)
};

// Bisection (on log epsilon) for the epsilon whose estimated variance matches
// |target_variance|. Throws CalibrationError when the bracket does not
// straddle the target.
CalibrationResult calibrate_epsilon(const Microdata& md,
                                    double target_variance,
                                    const CalibrationOptions& options);

}  // namespace swaplab

#endif  // SWAPLAB_TOYDOWN_H_
