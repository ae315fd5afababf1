#ifndef SWAPLAB_METRICS_H_
#define SWAPLAB_METRICS_H_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "swaplab/geodata.h"
#include "swaplab/swap_engine.h"

namespace swaplab {

// Published mean absolute block-level errors for Alabama, kept for
// documentation. They come from non-public microdata and are not test
// targets.
inline constexpr double kReferenceMaeTopDownAlabama = 1.15536;
inline constexpr double kReferenceMaeSwap2Alabama = 0.21892;

inline int64_t error(int64_t c1, int64_t c2) { return c1 - c2; }

// 2 / (1 + c1 / c2), with 0/0 -> 1, c1 > 0 = c2 -> 0 and c1 = 0 < c2 -> 2.
// Not symmetric: relative_error(a, b) + relative_error(b, a) is unconstrained.
double relative_error(int64_t c1, int64_t c2);

// Throws AlignmentError, listing up to ten missing keys per side, unless both
// tables cover the same regions at the same level.
void check_aligned(const RegionTable& a, const RegionTable& b);

struct ErrorRow {
  std::string region_id;
  Race race = Race::kWhite;
  int64_t count_1 = 0;
  int64_t count_2 = 0;
  int64_t error = 0;
  double relative_error = 1.0;
};

struct ErrorTable {
  Level level = Level::kBlock;
  std::vector<ErrorRow> rows;  // region-major, race-minor
};

ErrorTable error_table(const RegionTable& t1, const RegionTable& t2);
// region_id,race,count_1,count_2,error,relative_error
std::string error_table_csv(const ErrorTable& table);

// Two-run variance estimator: sum over cells of (a - b)^2, divided by
// 2 * regions * races. Unbiased for the cell-averaged variance when a and b
// are independent runs of the same mechanism.
double variance_estimate(const RegionTable& a, const RegionTable& b);

double mean_abs_error(const RegionTable& a, const RegionTable& b);

// The same estimators over explicit (region id, race) cells. Both maps must
// hold the same keys; otherwise AlignmentError lists up to ten missing keys
// per side.
using CellKey = std::pair<std::string, Race>;
using CellCounts = std::map<CellKey, int64_t>;
CellCounts cell_counts(const RegionTable& table);
double variance_estimate(const CellCounts& a, const CellCounts& b);
double mean_abs_error(const CellCounts& a, const CellCounts& b);

// Shannon entropy in nats of the race distribution; 0 for an empty region.
double racial_entropy(const RaceCounts& counts);

// Unweighted average of racial_entropy over the rows of |table|.
double mean_entropy(const RegionTable& table);

struct TractEntropy {
  std::string tract_id;
  double before = 0.0;
  // After (1) removing all targets, (2) removing all partners, (3) adding
  // targets to their partners' tracts, (4) adding partners to their targets'
  // tracts. steps[3] is the entropy of the fully swapped data.
  std::array<double, 4> steps{};
};

struct EntropyReport {
  std::vector<TractEntropy> tracts;
  double mean_before = 0.0;
  std::array<double, 4> mean_steps{};

  double mean_after() const { return mean_steps[3]; }
};

// Throws AuditError if |log| does not describe a swap of |before|.
EntropyReport entropy_decomposition(const Microdata& before,
                                    const SwapLog& log);
// tract_id,before,step1,step2,step3,step4 followed by a "mean" row.
std::string entropy_report_csv(const EntropyReport& report);

struct RuccRatioRow {
  std::string county_id;
  int rucc = 0;
  Race race = Race::kWhite;
  int64_t count_1 = 0;
  int64_t count_2 = 0;
  double ratio = 0.0;
};

struct RuccGroupSummary {
  int rucc = 0;
  Race race = Race::kWhite;
  int64_t n = 0;
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct RuccRatioTable {
  std::vector<RuccRatioRow> rows;        // finite ratios only
  std::vector<RuccGroupSummary> groups;  // by (rucc, race)
  int64_t excluded_cells = 0;            // x/0 and 0/0
  int64_t missing_rucc_counties = 0;
};

// County-level ratios count_1 / count_2 grouped by rural-urban code.
RuccRatioTable rucc_ratio_table(const RegionTable& counties_1,
                                const RegionTable& counties_2,
                                const GeoHierarchy& geo);
// rucc,race,county_id,count_1,count_2,ratio
std::string rucc_rows_csv(const RuccRatioTable& table);
// rucc,race,n,min,median,mean,max
std::string rucc_groups_csv(const RuccRatioTable& table);

// Household race label: the shared race when every member has the same one,
// otherwise kMultipleRaces.
inline constexpr int kMultipleRaces = kNumRaces;
inline constexpr int kNumHouseholdRaceLabels = kNumRaces + 1;
int household_race(const Household& h);
std::string_view household_race_name(int label);

struct SwapTabulations {
  // Percent of households of size 1..max_size, overall and among targets.
  std::vector<double> size_pct_overall;
  std::vector<double> size_pct_targets;
  std::array<double, kNumHouseholdRaceLabels> race_pct_overall{};
  std::array<double, kNumHouseholdRaceLabels> race_pct_targets{};
  // Row = target race, column = partner race. Rows with any targets sum to
  // 100; empty rows are all zero.
  std::array<std::array<int64_t, kNumHouseholdRaceLabels>,
             kNumHouseholdRaceLabels>
      partner_counts{};
  std::array<std::array<double, kNumHouseholdRaceLabels>,
             kNumHouseholdRaceLabels>
      partner_pct{};
};

// Throws AuditError if |log| does not describe a swap of |before|.
SwapTabulations swap_tabulations(const Microdata& before, const SwapLog& log);
// size,pct_overall,pct_targets
std::string size_distribution_csv(const SwapTabulations& t);
// race,pct_overall,pct_targets
std::string target_race_csv(const SwapTabulations& t);
// target_race,<partner race columns...>
std::string partner_matrix_csv(const SwapTabulations& t);

}  // namespace swaplab

#endif  // SWAPLAB_METRICS_H_
