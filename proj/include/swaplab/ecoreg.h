#ifndef SWAPLAB_ECOREG_H_
#define SWAPLAB_ECOREG_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "swaplab/geodata.h"
#include "swaplab/swap_engine.h"
#include "swaplab/toydown.h"

namespace swaplab {

struct Precinct {
  std::string id;
  int64_t population = 0;
  RaceCounts race_counts{};
  std::vector<int64_t> votes;  // per candidate
};

// Precincts are unions of whole tracts.
struct PrecinctMap {
  std::vector<std::string> precinct_ids;
  std::vector<int32_t> precinct_of_tract;  // indexed by tract
};

// Groups consecutive tracts of the same county, |tracts_per_precinct| at a
// time.
PrecinctMap group_tracts(const GeoHierarchy& geo, int tracts_per_precinct);

struct ERResult {
  Race race = Race::kWhite;
  int candidate = 0;  // 0-based
  double slope = 0.0;
  double intercept = 0.0;
  // Fitted vote share at a race share of 1, i.e. intercept + slope.
  double support_estimate = 0.0;
  bool weighted = false;
  int64_t precincts_used = 0;
};

// Least-squares fit of candidate vote share on race share across precincts,
// optionally weighted by precinct population. Precincts with no population or
// no votes are skipped. Throws InsufficientDataError with fewer than three
// usable precincts and DegenerateDesignError when the race share does not
// vary.
ERResult ecological_regression(std::span<const Precinct> precincts, Race race,
                               int candidate, bool weighted);

// max |normal-equation residual| / scale for a fitted result; ~1e-16 for an
// exact fit.
double normal_equations_residual(std::span<const Precinct> precincts,
                                 const ERResult& fit);

struct Election {
  std::vector<Precinct> precincts;
  PrecinctMap map;
  int64_t excluded_empty = 0;
};

// support[r][c] is the probability that a voter of race r picks candidate c.
// Each person turns out with probability |turnout| and then votes by their
// race's row. Empty precincts are dropped and counted.
Election generate_election(const Microdata& md, const PrecinctMap& map,
                           const std::vector<std::vector<double>>& support,
                           double turnout, uint64_t seed);

// Same votes, population and race counts recomputed from a (protected) block
// table.
std::vector<Precinct> reaggregate(const Election& election,
                                  const RegionTable& blocks,
                                  const GeoHierarchy& geo);

// precinct_id,population,w,b,aian,as,hpi,oth,two_plus,votes_cand1,...
std::string precinct_csv(std::span<const Precinct> precincts);

struct ErCsvRow {
  ERResult fit;
  int replicate = 0;
};
// race,candidate,weighted,slope,intercept,support_estimate,replicate
std::string er_csv(std::span<const ErCsvRow> rows);

struct ElectionSpec {
  int tracts_per_precinct = 1;
  std::vector<std::vector<double>> support;  // kNumRaces rows
  double turnout = 0.6;
  uint64_t seed = 0;
};

// Two-candidate polarized election: White voters back candidate 1 at |p|,
// every other race backs candidate 2 at |p|.
ElectionSpec polarized_election(double p = 0.9);

struct ErComparisonRow {
  int replicate = 0;
  Race race = Race::kWhite;
  int candidate = 0;
  bool weighted = false;
  double slope_original = 0.0;
  double slope_swapped = 0.0;
  double slope_toydown = 0.0;
  // Largest normal_equations_residual() over the three fits of this row.
  double max_normal_residual = 0.0;
};

// Holds votes fixed and re-fits ER on race shares from the original data, a
// swapped copy and a ToyDown copy, for every replicate, race in |races|,
// candidate and weighting. A swap rate of 0 means "do not swap". Replicate i
// uses swap seed derive_seed(base_seed, "er-swap", i) and ToyDown seed
// derive_seed(base_seed, "er-toydown", i).
std::vector<ErComparisonRow> er_bias_experiment(
    const Microdata& md, const SwapConfig& swap_cfg,
    const ToyDownConfig& toydown_cfg, const ElectionSpec& election,
    int replicates, uint64_t base_seed,
    const std::vector<Race>& races = {Race::kWhite, Race::kBlack});

// replicate,race,candidate,weighted,slope_original,slope_swapped,
// slope_toydown
std::string er_comparison_csv(std::span<const ErComparisonRow> rows);

}  // namespace swaplab

#endif  // SWAPLAB_ECOREG_H_
