#include "swaplab/geodata.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "swaplab/csv.h"
#include "swaplab/errors.h"
#include "swaplab/random.h"

namespace swaplab {

namespace {

constexpr std::array<std::string_view, kNumRaces> kRaceCodes = {
    "w", "b", "aian", "as", "hpi", "oth", "two_plus"};
constexpr std::array<std::string_view, kNumRaces> kRaceLabels = {
    "W", "B", "AI/AN", "AS", "H/PI", "OTH", "2+"};

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

const std::vector<std::string> kHouseholdHeader = {
    "household_id", "block_id", "w",        "b",        "aian",  "as",
    "hpi",          "oth",      "two_plus", "hispanic", "adults"};

const std::vector<std::string> kGeographyHeader = {
    "block_id", "tract_id", "county_id", "state_id", "x", "y", "rucc"};

std::string padded(int value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) {
    s.insert(0, static_cast<size_t>(width) - s.size(), '0');
  }
  return s;
}

int digits(int n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return std::max(d, 3);
}

}  // namespace

std::string_view race_code(Race r) { return kRaceCodes[race_index(r)]; }
std::string_view race_label(Race r) { return kRaceLabels[race_index(r)]; }

std::optional<Race> parse_race(std::string_view s) {
  for (Race r : kAllRaces) {
    if (iequals(s, race_code(r)) || iequals(s, race_label(r))) return r;
  }
  return std::nullopt;
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::kState:
      return "state";
    case Level::kCounty:
      return "county";
    case Level::kTract:
      return "tract";
    case Level::kBlock:
      return "block";
  }
  return "";
}

std::optional<Level> parse_level(std::string_view s) {
  for (Level l : kAllLevels) {
    if (iequals(s, level_name(l))) return l;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// GeoHierarchy

GeoHierarchy::GeoHierarchy(std::string state_id,
                           const std::vector<CountySpec>& counties,
                           const std::vector<TractSpec>& tracts,
                           const std::vector<BlockSpec>& blocks)
    : state_id_(std::move(state_id)) {
  for (const CountySpec& c : counties) {
    if (c.id.empty()) throw GeographyError("county with empty id");
    if (c.rucc && (*c.rucc < 1 || *c.rucc > 9)) {
      throw GeographyError("county " + c.id + ": rucc code " +
                           std::to_string(*c.rucc) + " outside 1..9");
    }
    auto [it, inserted] = county_index_.emplace(
        c.id, static_cast<int32_t>(counties_.size()));
    if (!inserted) throw GeographyError("duplicate county id " + c.id);
    counties_.push_back({c.id, c.rucc});
  }
  for (const TractSpec& t : tracts) {
    if (t.id.empty()) throw GeographyError("tract with empty id");
    auto county = county_index_.find(t.county_id);
    if (county == county_index_.end()) {
      throw GeographyError("tract " + t.id + " references missing county '" +
                           t.county_id + "'");
    }
    auto [it, inserted] =
        tract_index_.emplace(t.id, static_cast<int32_t>(tracts_.size()));
    if (!inserted) throw GeographyError("duplicate tract id " + t.id);
    tracts_.push_back({t.id, county->second});
  }
  for (const BlockSpec& b : blocks) {
    if (b.id.empty()) throw GeographyError("block with empty id");
    auto tract = tract_index_.find(b.tract_id);
    if (tract == tract_index_.end()) {
      throw GeographyError("block " + b.id + " references missing tract '" +
                           b.tract_id + "'");
    }
    if (!std::isfinite(b.x) || !std::isfinite(b.y)) {
      throw GeographyError("block " + b.id + " has a non-finite centroid");
    }
    auto [it, inserted] =
        block_index_.emplace(b.id, static_cast<int32_t>(blocks_.size()));
    if (!inserted) throw GeographyError("duplicate block id " + b.id);
    blocks_.push_back({b.id, tract->second, b.x, b.y});
  }

  all_counties_.resize(counties_.size());
  std::iota(all_counties_.begin(), all_counties_.end(), 0);
  county_tracts_.assign(counties_.size(), {});
  for (size_t t = 0; t < tracts_.size(); ++t) {
    county_tracts_[tracts_[t].county].push_back(static_cast<int32_t>(t));
  }
  tract_blocks_.assign(tracts_.size(), {});
  for (size_t b = 0; b < blocks_.size(); ++b) {
    tract_blocks_[blocks_[b].tract].push_back(static_cast<int32_t>(b));
  }
}

std::optional<int32_t> GeoHierarchy::find_block(std::string_view id) const {
  auto it = block_index_.find(std::string(id));
  if (it == block_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int32_t> GeoHierarchy::find_tract(std::string_view id) const {
  auto it = tract_index_.find(std::string(id));
  if (it == tract_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int32_t> GeoHierarchy::find_county(std::string_view id) const {
  auto it = county_index_.find(std::string(id));
  if (it == county_index_.end()) return std::nullopt;
  return it->second;
}

size_t GeoHierarchy::num_regions(Level level) const {
  switch (level) {
    case Level::kState:
      return 1;
    case Level::kCounty:
      return counties_.size();
    case Level::kTract:
      return tracts_.size();
    case Level::kBlock:
      return blocks_.size();
  }
  return 0;
}

const std::string& GeoHierarchy::region_id(Level level, size_t index) const {
  switch (level) {
    case Level::kState:
      return state_id_;
    case Level::kCounty:
      return counties_[index].id;
    case Level::kTract:
      return tracts_[index].id;
    case Level::kBlock:
      return blocks_[index].id;
  }
  return state_id_;
}

int32_t GeoHierarchy::region_of_block(Level level, int32_t block) const {
  switch (level) {
    case Level::kState:
      return 0;
    case Level::kCounty:
      return county_of_block(block);
    case Level::kTract:
      return tract_of_block(block);
    case Level::kBlock:
      return block;
  }
  return 0;
}

std::span<const int32_t> GeoHierarchy::children(Level level,
                                                size_t index) const {
  switch (level) {
    case Level::kState:
      return all_counties_;
    case Level::kCounty:
      return county_tracts_[index];
    case Level::kTract:
      return tract_blocks_[index];
    case Level::kBlock:
      return {};
  }
  return {};
}

double GeoHierarchy::block_distance(int32_t a, int32_t b) const {
  return std::hypot(blocks_[a].x - blocks_[b].x, blocks_[a].y - blocks_[b].y);
}

bool GeoHierarchy::operator==(const GeoHierarchy& other) const {
  if (state_id_ != other.state_id_ || blocks_.size() != other.blocks_.size() ||
      tracts_.size() != other.tracts_.size() ||
      counties_.size() != other.counties_.size()) {
    return false;
  }
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const Block& a = blocks_[i];
    const Block& b = other.blocks_[i];
    if (a.id != b.id || a.tract != b.tract || a.x != b.x || a.y != b.y) {
      return false;
    }
  }
  for (size_t i = 0; i < tracts_.size(); ++i) {
    if (tracts_[i].id != other.tracts_[i].id ||
        tracts_[i].county != other.tracts_[i].county) {
      return false;
    }
  }
  for (size_t i = 0; i < counties_.size(); ++i) {
    if (counties_[i].id != other.counties_[i].id ||
        counties_[i].rucc != other.counties_[i].rucc) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Microdata

Microdata::Microdata(std::shared_ptr<const GeoHierarchy> geo,
                     std::vector<Household> households)
    : geo_(std::move(geo)), households_(std::move(households)) {
  if (!geo_) throw ValidationError("microdata without geography");
  const auto num_blocks = static_cast<int32_t>(geo_->blocks().size());
  std::unordered_map<int64_t, bool> seen;
  seen.reserve(households_.size());
  for (const Household& h : households_) {
    const std::string who = "household " + std::to_string(h.id);
    for (int32_t c : h.race_counts) {
      if (c < 0) throw ValidationError(who + ": negative race count");
    }
    if (h.hispanic_count < 0 || h.adult_count < 0) {
      throw ValidationError(who + ": negative count");
    }
    const int32_t size = h.size();
    if (size < 1) throw ValidationError(who + ": household size is 0");
    if (h.adult_count > size) {
      throw ValidationError(who + ": adult count " +
                            std::to_string(h.adult_count) +
                            " exceeds household size " + std::to_string(size));
    }
    if (h.hispanic_count > size) {
      throw ValidationError(who + ": hispanic count " +
                            std::to_string(h.hispanic_count) +
                            " exceeds household size " + std::to_string(size));
    }
    if (h.block < 0 || h.block >= num_blocks) {
      throw GeographyError(who + ": block index out of range");
    }
    if (!seen.emplace(h.id, true).second) {
      throw ValidationError(who + ": duplicate household id");
    }
  }
}

bool Microdata::operator==(const Microdata& other) const {
  return households_ == other.households_ &&
         (geo_ == other.geo_ || *geo_ == *other.geo_);
}

// ---------------------------------------------------------------------------
// Synthetic generation

void SynthParams::validate() const {
  if (n_households < 0) throw ConfigError("n_households must be >= 0");
  if (counties < 1 || tracts_per_county < 1 || blocks_per_tract < 1) {
    throw ConfigError("grid dimensions must be positive");
  }
  if (size_distribution.empty() || size_distribution.size() > 12) {
    throw ConfigError("size_distribution must have 1..12 entries");
  }
  auto check_prob_vector = [](std::span<const double> p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) {
        throw ConfigError(std::string(name) + " has a negative entry");
      }
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw ConfigError(std::string(name) + " sums to " + format_double(sum) +
                        ", expected 1");
    }
  };
  check_prob_vector(size_distribution, "size_distribution");
  check_prob_vector(race_mixture, "race_mixture");
  auto check_unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(std::string(name) + " must lie in [0, 1]");
    }
  };
  check_unit(hispanic_rate, "hispanic_rate");
  check_unit(segregation, "segregation");
  check_unit(adult_rate, "adult_rate");
}

SynthParams default_synth_params() {
  SynthParams p;
  p.size_distribution = {0.27, 0.34, 0.16, 0.13, 0.06, 0.025,
                         0.01, 0.003, 0.001, 0.0005, 0.0003, 0.0002};
  p.race_mixture = {0.66, 0.26, 0.006, 0.012, 0.002, 0.02, 0.04};
  p.hispanic_rate = 0.04;
  p.segregation = 0.5;
  p.adult_rate = 0.76;
  return p;
}

Microdata generate_synthetic(const SynthParams& params, uint64_t seed) {
  params.validate();
  if (params.n_households == 0) {
    throw EmptyPopulationError("synthetic population with 0 households");
  }

  // Geography: counties on a square grid, tracts on a square grid inside each
  // county, blocks on a square grid inside each tract. One block is a unit
  // square.
  const int county_cols =
      static_cast<int>(std::ceil(std::sqrt(double(params.counties))));
  const int tract_cols =
      static_cast<int>(std::ceil(std::sqrt(double(params.tracts_per_county))));
  const int block_cols =
      static_cast<int>(std::ceil(std::sqrt(double(params.blocks_per_tract))));
  const double tract_side = block_cols;
  const double county_side = tract_cols * tract_side;

  const int cw = digits(params.counties);
  const int tw = digits(params.tracts_per_county);
  const int bw = digits(params.blocks_per_tract);

  std::vector<GeoHierarchy::CountySpec> counties;
  std::vector<GeoHierarchy::TractSpec> tracts;
  std::vector<GeoHierarchy::BlockSpec> blocks;
  for (int c = 0; c < params.counties; ++c) {
    const std::string county_id = "C" + padded(c + 1, cw);
    counties.push_back({county_id, 1 + c % 9});
    const double cx = (c % county_cols) * county_side;
    const double cy = (c / county_cols) * county_side;
    for (int t = 0; t < params.tracts_per_county; ++t) {
      const std::string tract_id = county_id + "T" + padded(t + 1, tw);
      tracts.push_back({tract_id, county_id});
      const double tx = cx + (t % tract_cols) * tract_side;
      const double ty = cy + (t / tract_cols) * tract_side;
      for (int b = 0; b < params.blocks_per_tract; ++b) {
        blocks.push_back({tract_id + "B" + padded(b + 1, bw), tract_id,
                          tx + (b % block_cols) + 0.5,
                          ty + (b / block_cols) + 0.5});
      }
    }
  }
  auto geo = std::make_shared<const GeoHierarchy>("S01", counties, tracts,
                                                  blocks);

  // Each tract gets a dominant race drawn from the statewide mixture; its
  // members are drawn from (1 - a) * statewide + a * dominant.
  Rng tract_rng(substream(seed, "tract-dominance"));
  const size_t num_tracts = geo->tracts().size();
  std::vector<std::array<double, kNumRaces>> tract_mix(num_tracts);
  for (size_t t = 0; t < num_tracts; ++t) {
    const size_t dominant = tract_rng.categorical(params.race_mixture);
    for (int r = 0; r < kNumRaces; ++r) {
      tract_mix[t][r] = (1.0 - params.segregation) * params.race_mixture[r] +
                        (static_cast<size_t>(r) == dominant
                             ? params.segregation
                             : 0.0);
    }
  }

  Rng rng(substream(seed, "households"));
  const uint64_t num_blocks = geo->blocks().size();
  std::vector<Household> households;
  households.reserve(static_cast<size_t>(params.n_households));
  for (int64_t i = 0; i < params.n_households; ++i) {
    Household h;
    h.id = i + 1;
    h.block = static_cast<int32_t>(rng.uniform_index(num_blocks));
    const int size =
        static_cast<int>(rng.categorical(params.size_distribution)) + 1;
    const auto& mix = tract_mix[geo->tract_of_block(h.block)];
    for (int m = 0; m < size; ++m) {
      ++h.race_counts[rng.categorical(mix)];
      if (rng.bernoulli(params.hispanic_rate)) ++h.hispanic_count;
      if (rng.bernoulli(params.adult_rate)) ++h.adult_count;
    }
    households.push_back(h);
  }
  return Microdata(std::move(geo), std::move(households));
}

// ---------------------------------------------------------------------------
// Aggregation

int64_t household_field(const Household& h, CountField field) {
  switch (field.kind) {
    case CountField::Kind::kRace:
      return h.race_counts[race_index(field.race)];
    case CountField::Kind::kTotal:
      return h.size();
    case CountField::Kind::kHispanic:
      return h.hispanic_count;
    case CountField::Kind::kAdult:
      return h.adult_count;
  }
  return 0;
}

std::map<std::string, int64_t> aggregate_counts(const Microdata& md,
                                                Level level,
                                                CountField field) {
  const GeoHierarchy& geo = md.geo();
  std::vector<int64_t> dense(geo.num_regions(level), 0);
  for (const Household& h : md.households()) {
    dense[geo.region_of_block(level, h.block)] += household_field(h, field);
  }
  std::map<std::string, int64_t> out;
  for (size_t i = 0; i < dense.size(); ++i) {
    out.emplace(geo.region_id(level, i), dense[i]);
  }
  return out;
}

RegionTable race_table(const Microdata& md, Level level) {
  const GeoHierarchy& geo = md.geo();
  RegionTable t;
  t.level = level;
  const size_t n = geo.num_regions(level);
  t.ids.reserve(n);
  for (size_t i = 0; i < n; ++i) t.ids.push_back(geo.region_id(level, i));
  t.counts.assign(n, RaceCounts{});
  for (const Household& h : md.households()) {
    RaceCounts& row = t.counts[geo.region_of_block(level, h.block)];
    for (int r = 0; r < kNumRaces; ++r) row[r] += h.race_counts[r];
  }
  return t;
}

RegionTable rollup(const RegionTable& blocks, const GeoHierarchy& geo,
                   Level level) {
  if (blocks.level != Level::kBlock ||
      blocks.counts.size() != geo.blocks().size()) {
    throw AlignmentError("rollup expects a block table for this geography");
  }
  RegionTable t;
  t.level = level;
  const size_t n = geo.num_regions(level);
  for (size_t i = 0; i < n; ++i) t.ids.push_back(geo.region_id(level, i));
  t.counts.assign(n, RaceCounts{});
  for (size_t b = 0; b < blocks.counts.size(); ++b) {
    RaceCounts& row =
        t.counts[geo.region_of_block(level, static_cast<int32_t>(b))];
    for (int r = 0; r < kNumRaces; ++r) row[r] += blocks.counts[b][r];
  }
  return t;
}

// ---------------------------------------------------------------------------
// I/O

GeoHierarchy load_geography(const std::filesystem::path& path) {
  CsvReader reader(path, kGeographyHeader);
  std::vector<std::string_view> f;
  std::vector<GeoHierarchy::CountySpec> counties;
  std::vector<GeoHierarchy::TractSpec> tracts;
  std::vector<GeoHierarchy::BlockSpec> blocks;
  std::unordered_map<std::string, size_t> county_pos;
  std::unordered_map<std::string, std::string> tract_county;
  std::string state_id;
  while (reader.next(f)) {
    const int line = reader.line();
    auto where = [&](const std::string& msg) {
      return "line " + std::to_string(line) + ": " + msg;
    };
    std::string block_id(f[0]), tract_id(f[1]), county_id(f[2]),
        state(f[3]);
    if (block_id.empty()) throw ParseError("empty block_id", line);
    if (tract_id.empty()) {
      throw GeographyError(where("block " + block_id + " has no tract"));
    }
    if (county_id.empty()) {
      throw GeographyError(where("tract " + tract_id + " has no county"));
    }
    if (state.empty()) throw GeographyError(where("missing state_id"));
    if (state_id.empty()) {
      state_id = state;
    } else if (state != state_id) {
      throw GeographyError(where("geography spans states " + state_id +
                                 " and " + state));
    }
    const double x = parse_double(f[4], line, "x");
    const double y = parse_double(f[5], line, "y");
    std::optional<int> rucc;
    if (!f[6].empty()) rucc = static_cast<int>(parse_int(f[6], line, "rucc"));

    auto cit = county_pos.find(county_id);
    if (cit == county_pos.end()) {
      county_pos.emplace(county_id, counties.size());
      counties.push_back({county_id, rucc});
    } else if (counties[cit->second].rucc != rucc) {
      throw GeographyError(where("county " + county_id +
                                 " has conflicting rucc codes"));
    }
    auto tit = tract_county.find(tract_id);
    if (tit == tract_county.end()) {
      tract_county.emplace(tract_id, county_id);
      tracts.push_back({tract_id, county_id});
    } else if (tit->second != county_id) {
      throw GeographyError(where("tract " + tract_id +
                                 " assigned to two counties"));
    }
    blocks.push_back({block_id, tract_id, x, y});
  }
  if (blocks.empty()) throw GeographyError(path.string() + ": no blocks");
  return GeoHierarchy(state_id, counties, tracts, blocks);
}

Microdata load_microdata(const std::filesystem::path& households_path,
                         std::shared_ptr<const GeoHierarchy> geo) {
  CsvReader reader(households_path, kHouseholdHeader);
  std::vector<std::string_view> f;
  std::vector<Household> households;
  while (reader.next(f)) {
    const int line = reader.line();
    Household h;
    h.id = parse_int(f[0], line, "household_id");
    auto block = geo->find_block(f[1]);
    if (!block) {
      throw GeographyError("line " + std::to_string(line) + ": household " +
                           std::to_string(h.id) + " references unknown block '" +
                           std::string(f[1]) + "'");
    }
    h.block = *block;
    for (int r = 0; r < kNumRaces; ++r) {
      h.race_counts[r] = static_cast<int32_t>(
          parse_int(f[2 + r], line, kHouseholdHeader[2 + r]));
    }
    h.hispanic_count = static_cast<int32_t>(parse_int(f[9], line, "hispanic"));
    h.adult_count = static_cast<int32_t>(parse_int(f[10], line, "adults"));
    households.push_back(h);
  }
  return Microdata(std::move(geo), std::move(households));
}

Microdata load_microdata(const std::filesystem::path& households_path,
                         const std::filesystem::path& geography_path) {
  return load_microdata(
      households_path,
      std::make_shared<const GeoHierarchy>(load_geography(geography_path)));
}

std::string households_csv(const Microdata& md) {
  std::vector<const Household*> rows;
  rows.reserve(md.size());
  for (const Household& h : md.households()) rows.push_back(&h);
  std::sort(rows.begin(), rows.end(),
            [](const Household* a, const Household* b) { return a->id < b->id; });
  std::string out;
  for (size_t i = 0; i < kHouseholdHeader.size(); ++i) {
    if (i) out += ',';
    out += kHouseholdHeader[i];
  }
  out += '\n';
  const GeoHierarchy& geo = md.geo();
  for (const Household* h : rows) {
    out += std::to_string(h->id);
    out += ',';
    out += geo.blocks()[h->block].id;
    for (int32_t c : h->race_counts) {
      out += ',';
      out += std::to_string(c);
    }
    out += ',';
    out += std::to_string(h->hispanic_count);
    out += ',';
    out += std::to_string(h->adult_count);
    out += '\n';
  }
  return out;
}

std::string geography_csv(const GeoHierarchy& geo) {
  std::string out = "block_id,tract_id,county_id,state_id,x,y,rucc\n";
  for (const auto& b : geo.blocks()) {
    const auto& tract = geo.tracts()[b.tract];
    const auto& county = geo.counties()[tract.county];
    out += b.id + ',' + tract.id + ',' + county.id + ',' + geo.state_id() +
           ',' + format_double(b.x) + ',' + format_double(b.y) + ',';
    if (county.rucc) out += std::to_string(*county.rucc);
    out += '\n';
  }
  return out;
}

}  // namespace swaplab
