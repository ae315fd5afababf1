#ifndef SWAPLAB_GEODATA_H_
#define SWAPLAB_GEODATA_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace swaplab {

inline constexpr int kNumRaces = 7;

// The seven mutually exclusive race categories. Hispanic origin is an
// ethnicity and is carried separately on each household.
enum class Race : uint8_t {
  kWhite = 0,
  kBlack = 1,
  kAmericanIndian = 2,
  kAsian = 3,
  kPacificIslander = 4,
  kOther = 5,
  kTwoOrMore = 6,
};

inline constexpr std::array<Race, kNumRaces> kAllRaces = {
    Race::kWhite,           Race::kBlack, Race::kAmericanIndian, Race::kAsian,
    Race::kPacificIslander, Race::kOther, Race::kTwoOrMore};

// CSV column name: w, b, aian, as, hpi, oth, two_plus.
std::string_view race_code(Race r);
// Table label: W, B, AI/AN, AS, H/PI, OTH, 2+.
std::string_view race_label(Race r);
// Accepts either the code or the label, case-insensitively.
std::optional<Race> parse_race(std::string_view s);

inline int race_index(Race r) { return static_cast<int>(r); }

using RaceCounts = std::array<int64_t, kNumRaces>;

struct Household {
  int64_t id = 0;
  int32_t block = 0;  // index into GeoHierarchy::blocks()
  std::array<int32_t, kNumRaces> race_counts{};
  int32_t hispanic_count = 0;
  int32_t adult_count = 0;

  int32_t size() const {
    int32_t s = 0;
    for (int32_t c : race_counts) s += c;
    return s;
  }

  bool operator==(const Household&) const = default;
};

enum class Level { kState = 0, kCounty = 1, kTract = 2, kBlock = 3 };

inline constexpr std::array<Level, 4> kAllLevels = {
    Level::kState, Level::kCounty, Level::kTract, Level::kBlock};

std::string_view level_name(Level level);
std::optional<Level> parse_level(std::string_view s);

// Block -> tract -> county -> state nesting for a single state, plus planar
// block centroids. Regions are addressed by dense indices in first-seen
// order; the string ids are kept for I/O.
class GeoHierarchy {
 public:
  struct Block {
    std::string id;
    int32_t tract = 0;
    double x = 0.0;
    double y = 0.0;
  };
  struct Tract {
    std::string id;
    int32_t county = 0;
  };
  struct County {
    std::string id;
    std::optional<int> rucc;  // rural-urban continuum code, 1..9
  };

  struct BlockSpec {
    std::string id;
    std::string tract_id;
    double x = 0.0;
    double y = 0.0;
  };
  struct TractSpec {
    std::string id;
    std::string county_id;
  };
  struct CountySpec {
    std::string id;
    std::optional<int> rucc;
  };

  // Throws GeographyError on dangling references, duplicate ids, non-finite
  // centroids or out-of-range rucc codes.
  GeoHierarchy(std::string state_id, const std::vector<CountySpec>& counties,
               const std::vector<TractSpec>& tracts,
               const std::vector<BlockSpec>& blocks);

  const std::string& state_id() const { return state_id_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<Tract>& tracts() const { return tracts_; }
  const std::vector<County>& counties() const { return counties_; }

  std::optional<int32_t> find_block(std::string_view id) const;
  std::optional<int32_t> find_tract(std::string_view id) const;
  std::optional<int32_t> find_county(std::string_view id) const;

  int32_t tract_of_block(int32_t block) const { return blocks_[block].tract; }
  int32_t county_of_block(int32_t block) const {
    return tracts_[blocks_[block].tract].county;
  }

  size_t num_regions(Level level) const;
  const std::string& region_id(Level level, size_t index) const;
  // Index of the region at |level| that contains |block|.
  int32_t region_of_block(Level level, int32_t block) const;
  // Child indices at the next finer level. Blocks have no children.
  std::span<const int32_t> children(Level level, size_t index) const;

  double block_distance(int32_t a, int32_t b) const;

  bool operator==(const GeoHierarchy& other) const;

 private:
  std::string state_id_;
  std::vector<Block> blocks_;
  std::vector<Tract> tracts_;
  std::vector<County> counties_;
  std::unordered_map<std::string, int32_t> block_index_;
  std::unordered_map<std::string, int32_t> tract_index_;
  std::unordered_map<std::string, int32_t> county_index_;
  std::vector<int32_t> all_counties_;
  std::vector<std::vector<int32_t>> county_tracts_;
  std::vector<std::vector<int32_t>> tract_blocks_;
};

// Household microdata for one state. Immutable after construction.
class Microdata {
 public:
  // Validates every household invariant and that each block index resolves.
  // Throws ValidationError naming the offending household id.
  Microdata(std::shared_ptr<const GeoHierarchy> geo,
            std::vector<Household> households);

  const std::vector<Household>& households() const { return households_; }
  const GeoHierarchy& geo() const { return *geo_; }
  const std::shared_ptr<const GeoHierarchy>& geo_ptr() const { return geo_; }
  const std::string& state_id() const { return geo_->state_id(); }
  size_t size() const { return households_.size(); }

  bool operator==(const Microdata& other) const;

 private:
  std::shared_ptr<const GeoHierarchy> geo_;
  std::vector<Household> households_;
};

// Parameters of the synthetic population generator.
struct SynthParams {
  int64_t n_households = 20000;
  int counties = 4;
  int tracts_per_county = 10;
  int blocks_per_tract = 10;
  // Probability of household size 1, 2, ... (at most 12 entries).
  std::vector<double> size_distribution;
  std::array<double, kNumRaces> race_mixture{};
  double hispanic_rate = 0.0;
  // 0 = every tract draws from the statewide mixture, 1 = every tract draws
  // only from its dominant race.
  double segregation = 0.0;
  double adult_rate = 0.75;

  // Throws ConfigError.
  void validate() const;
};

// Household sizes and race mixture loosely shaped like a southern state.
SynthParams default_synth_params();

// Deterministic in (params, seed). Throws EmptyPopulationError when
// n_households is 0 and ConfigError for invalid params.
Microdata generate_synthetic(const SynthParams& params, uint64_t seed);

// Field summed by aggregate_counts().
struct CountField {
  enum class Kind { kRace, kTotal, kHispanic, kAdult };
  Kind kind = Kind::kTotal;
  Race race = Race::kWhite;

  static CountField of_race(Race r) { return {Kind::kRace, r}; }
  static CountField total() { return {Kind::kTotal, Race::kWhite}; }
  static CountField hispanic() { return {Kind::kHispanic, Race::kWhite}; }
  static CountField adult() { return {Kind::kAdult, Race::kWhite}; }
};

int64_t household_field(const Household& h, CountField field);

// Region id -> person count for every region at |level|, zero-population
// regions included.
std::map<std::string, int64_t> aggregate_counts(const Microdata& md,
                                                Level level, CountField field);

// Dense per-race counts for every region at one level, in geography index
// order.
struct RegionTable {
  Level level = Level::kBlock;
  std::vector<std::string> ids;
  std::vector<RaceCounts> counts;

  bool operator==(const RegionTable&) const = default;
};

RegionTable race_table(const Microdata& md, Level level);

// Re-aggregates a block-level table to a coarser level of |geo|.
RegionTable rollup(const RegionTable& blocks, const GeoHierarchy& geo,
                   Level level);

// Loading and canonical serialization.
//
// Household CSV:  household_id,block_id,w,b,aian,as,hpi,oth,two_plus,
//                 hispanic,adults
// Geography CSV:  block_id,tract_id,county_id,state_id,x,y,rucc
GeoHierarchy load_geography(const std::filesystem::path& path);
Microdata load_microdata(const std::filesystem::path& households_path,
                         const std::filesystem::path& geography_path);
Microdata load_microdata(const std::filesystem::path& households_path,
                         std::shared_ptr<const GeoHierarchy> geo);

// Rows sorted by household_id, LF line endings.
std::string households_csv(const Microdata& md);
// One row per block in geography order.
std::string geography_csv(const GeoHierarchy& geo);

}  // namespace swaplab

#endif  // SWAPLAB_GEODATA_H_
