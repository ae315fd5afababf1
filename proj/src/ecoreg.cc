#include "swaplab/ecoreg.h"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>

#include "swaplab/csv.h"
#include "swaplab/errors.h"
#include "swaplab/random.h"

namespace swaplab {

PrecinctMap group_tracts(const GeoHierarchy& geo, int tracts_per_precinct) {
  if (tracts_per_precinct < 1) {
    throw ConfigError("tracts_per_precinct must be positive");
  }
  PrecinctMap map;
  map.precinct_of_tract.assign(geo.tracts().size(), -1);
  for (size_t c = 0; c < geo.counties().size(); ++c) {
    auto tracts = geo.children(Level::kCounty, c);
    for (size_t i = 0; i < tracts.size(); ++i) {
      if (i % tracts_per_precinct == 0) {
        map.precinct_ids.push_back(
            "P" + geo.counties()[c].id + "-" +
            std::to_string(i / tracts_per_precinct + 1));
      }
      map.precinct_of_tract[tracts[i]] =
          static_cast<int32_t>(map.precinct_ids.size() - 1);
    }
  }
  return map;
}

namespace {

struct Point {
  double x;
  double y;
  double w;
};

std::vector<Point> design(std::span<const Precinct> precincts, Race race,
                          int candidate, bool weighted) {
  std::vector<Point> pts;
  for (const Precinct& p : precincts) {
    if (p.population <= 0) continue;
    if (candidate < 0 || candidate >= static_cast<int>(p.votes.size())) {
      throw ConfigError("candidate index " + std::to_string(candidate) +
                        " out of range for precinct " + p.id);
    }
    int64_t total_votes = 0;
    for (int64_t v : p.votes) total_votes += v;
    if (total_votes <= 0) continue;
    const double x =
        double(p.race_counts[race_index(race)]) / double(p.population);
    const double y = double(p.votes[candidate]) / double(total_votes);
    pts.push_back({x, y, weighted ? double(p.population) : 1.0});
  }
  return pts;
}

}  // namespace

ERResult ecological_regression(std::span<const Precinct> precincts, Race race,
                               int candidate, bool weighted) {
  const auto pts = design(precincts, race, candidate, weighted);
  if (pts.size() < 3) {
    throw InsufficientDataError("ecological regression needs at least 3 "
                                "precincts with population and votes, found " +
                                std::to_string(pts.size()));
  }
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (const Point& p : pts) {
    sw += p.w;
    sx += p.w * p.x;
    sy += p.w * p.y;
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (const Point& p : pts) {
    sxx += p.w * (p.x - mx) * (p.x - mx);
    sxy += p.w * (p.x - mx) * (p.y - my);
  }
  if (!(sxx > 1e-15 * sw)) {
    throw DegenerateDesignError("race share of " +
                                std::string(race_code(race)) +
                                " does not vary across precincts");
  }
  ERResult r;
  r.race = race;
  r.candidate = candidate;
  r.weighted = weighted;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.support_estimate = r.intercept + r.slope;
  r.precincts_used = static_cast<int64_t>(pts.size());
  return r;
}

double normal_equations_residual(std::span<const Precinct> precincts,
                                 const ERResult& fit) {
  const auto pts = design(precincts, fit.race, fit.candidate, fit.weighted);
  // Gradient of the weighted squared loss, relative to the size of its terms.
  double g0 = 0.0, g1 = 0.0, s0 = 0.0, s1 = 0.0;
  for (const Point& p : pts) {
    const double resid = p.y - (fit.intercept + fit.slope * p.x);
    g0 += p.w * resid;
    g1 += p.w * p.x * resid;
    s0 += p.w * (std::fabs(p.y) + std::fabs(fit.intercept) +
                 std::fabs(fit.slope * p.x));
    s1 += p.w * p.x *
          (std::fabs(p.y) + std::fabs(fit.intercept) +
           std::fabs(fit.slope * p.x));
  }
  const double r0 = s0 > 0 ? std::fabs(g0) / s0 : 0.0;
  const double r1 = s1 > 0 ? std::fabs(g1) / s1 : 0.0;
  return std::max(r0, r1);
}

Election generate_election(const Microdata& md, const PrecinctMap& map,
                           const std::vector<std::vector<double>>& support,
                           double turnout, uint64_t seed) {
  if (!(turnout > 0.0 && turnout <= 1.0)) {
    throw ConfigError("turnout must lie in (0, 1]");
  }
  if (support.size() != kNumRaces) {
    throw ConfigError("support needs one row per race (7 rows)");
  }
  const size_t num_candidates = support[0].size();
  if (num_candidates < 1) throw ConfigError("support rows are empty");
  for (size_t r = 0; r < support.size(); ++r) {
    if (support[r].size() != num_candidates) {
      throw ConfigError("support rows differ in length");
    }
    double sum = 0.0;
    for (double p : support[r]) {
      if (!(p >= 0.0)) throw ConfigError("support has a negative entry");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw ConfigError("support row " + std::to_string(r) +
                        " does not sum to 1");
    }
  }
  const GeoHierarchy& geo = md.geo();
  if (map.precinct_of_tract.size() != geo.tracts().size()) {
    throw ConfigError("precinct map does not cover this geography");
  }

  std::vector<Precinct> all(map.precinct_ids.size());
  for (size_t i = 0; i < all.size(); ++i) {
    all[i].id = map.precinct_ids[i];
    all[i].votes.assign(num_candidates, 0);
  }
  Rng rng(seed);
  for (const Household& h : md.households()) {
    Precinct& p = all[map.precinct_of_tract[geo.tract_of_block(h.block)]];
    for (int r = 0; r < kNumRaces; ++r) {
      p.race_counts[r] += h.race_counts[r];
      p.population += h.race_counts[r];
      for (int32_t person = 0; person < h.race_counts[r]; ++person) {
        if (!rng.bernoulli(turnout)) continue;
        ++p.votes[rng.categorical(support[r])];
      }
    }
  }
  Election out;
  out.map = map;
  for (Precinct& p : all) {
    if (p.population == 0) {
      ++out.excluded_empty;
      continue;
    }
    out.precincts.push_back(std::move(p));
  }
  return out;
}

std::vector<Precinct> reaggregate(const Election& election,
                                  const RegionTable& blocks,
                                  const GeoHierarchy& geo) {
  if (blocks.level != Level::kBlock ||
      blocks.counts.size() != geo.blocks().size()) {
    throw AlignmentError("reaggregate expects a block table for this "
                         "geography");
  }
  std::vector<RaceCounts> by_precinct(election.map.precinct_ids.size(),
                                      RaceCounts{});
  for (size_t b = 0; b < blocks.counts.size(); ++b) {
    const int32_t p = election.map.precinct_of_tract[geo.tract_of_block(
        static_cast<int32_t>(b))];
    for (int r = 0; r < kNumRaces; ++r) by_precinct[p][r] += blocks.counts[b][r];
  }
  std::unordered_map<std::string, size_t> index;
  for (size_t i = 0; i < election.map.precinct_ids.size(); ++i) {
    index.emplace(election.map.precinct_ids[i], i);
  }
  std::vector<Precinct> out = election.precincts;
  for (Precinct& p : out) {
    p.race_counts = by_precinct[index.at(p.id)];
    p.population = 0;
    for (int64_t c : p.race_counts) p.population += c;
  }
  return out;
}

std::string precinct_csv(std::span<const Precinct> precincts) {
  std::string out = "precinct_id,population,w,b,aian,as,hpi,oth,two_plus";
  const size_t k = precincts.empty() ? 0 : precincts.front().votes.size();
  for (size_t c = 0; c < k; ++c) out += ",votes_cand" + std::to_string(c + 1);
  out += '\n';
  for (const Precinct& p : precincts) {
    out += p.id + ',' + std::to_string(p.population);
    for (int64_t c : p.race_counts) out += ',' + std::to_string(c);
    for (int64_t v : p.votes) out += ',' + std::to_string(v);
    out += '\n';
  }
  return out;
}

std::string er_csv(std::span<const ErCsvRow> rows) {
  std::string out =
      "race,candidate,weighted,slope,intercept,support_estimate,replicate\n";
  for (const ErCsvRow& row : rows) {
    const ERResult& f = row.fit;
    out += std::string(race_code(f.race)) + ',' +
           std::to_string(f.candidate + 1) + ',' + (f.weighted ? "1" : "0") +
           ',' + format_fixed6(f.slope) + ',' + format_fixed6(f.intercept) +
           ',' + format_fixed6(f.support_estimate) + ',' +
           std::to_string(row.replicate) + '\n';
  }
  return out;
}

ElectionSpec polarized_election(double p) {
  ElectionSpec spec;
  spec.support.assign(kNumRaces, {1.0 - p, p});
  spec.support[race_index(Race::kWhite)] = {p, 1.0 - p};
  return spec;
}

std::vector<ErComparisonRow> er_bias_experiment(
    const Microdata& md, const SwapConfig& swap_cfg,
    const ToyDownConfig& toydown_cfg, const ElectionSpec& election_spec,
    int replicates, uint64_t base_seed, const std::vector<Race>& races) {
  if (replicates < 1) throw ConfigError("replicates must be positive");
  const GeoHierarchy& geo = md.geo();
  const Election election = generate_election(
      md, group_tracts(geo, election_spec.tracts_per_precinct),
      election_spec.support, election_spec.turnout, election_spec.seed);
  const size_t num_candidates = election_spec.support[0].size();

  const bool swapping = swap_cfg.swap_rate > 0.0;
  std::optional<SwapEngine> engine;
  if (swapping) engine.emplace(md);
  const ToyDown toydown(md);

  struct Key {
    Race race;
    int candidate;
    bool weighted;
  };
  std::vector<Key> keys;
  for (Race race : races) {
    for (size_t c = 0; c < num_candidates; ++c) {
      for (bool weighted : {false, true}) {
        keys.push_back({race, static_cast<int>(c), weighted});
      }
    }
  }
  std::vector<double> original;
  std::vector<double> original_residual;
  for (const Key& k : keys) {
    const ERResult fit = ecological_regression(election.precincts, k.race,
                                               k.candidate, k.weighted);
    original.push_back(fit.slope);
    original_residual.push_back(
        normal_equations_residual(election.precincts, fit));
  }

  std::vector<ErComparisonRow> rows;
  for (int rep = 0; rep < replicates; ++rep) {
    std::vector<Precinct> swapped = election.precincts;
    if (swapping) {
      SwapConfig cfg = swap_cfg;
      cfg.seed = derive_seed(base_seed, "er-swap", rep);
      swapped = reaggregate(election,
                            race_table(engine->run(cfg).swapped, Level::kBlock),
                            geo);
    }
    ToyDownConfig tcfg = toydown_cfg;
    tcfg.seed = derive_seed(base_seed, "er-toydown", rep);
    const std::vector<Precinct> noisy =
        reaggregate(election, toydown.run(tcfg), geo);
    for (size_t i = 0; i < keys.size(); ++i) {
      const Key& k = keys[i];
      ErComparisonRow row;
      row.replicate = rep;
      row.race = k.race;
      row.candidate = k.candidate;
      row.weighted = k.weighted;
      row.slope_original = original[i];
      const ERResult fit_swapped =
          ecological_regression(swapped, k.race, k.candidate, k.weighted);
      const ERResult fit_toydown =
          ecological_regression(noisy, k.race, k.candidate, k.weighted);
      row.slope_swapped = fit_swapped.slope;
      row.slope_toydown = fit_toydown.slope;
      row.max_normal_residual = std::max(
          {original_residual[i], normal_equations_residual(swapped, fit_swapped),
           normal_equations_residual(noisy, fit_toydown)});
      rows.push_back(row);
    }
  }
  return rows;
}

std::string er_comparison_csv(std::span<const ErComparisonRow> rows) {
  std::string out =
      "replicate,race,candidate,weighted,slope_original,slope_swapped,"
      "slope_toydown\n";
  for (const ErComparisonRow& r : rows) {
    out += std::to_string(r.replicate) + ',' + std::string(race_code(r.race)) +
           ',' + std::to_string(r.candidate + 1) + ',' +
           (r.weighted ? "1" : "0") + ',' + format_fixed6(r.slope_original) +
           ',' + format_fixed6(r.slope_swapped) + ',' +
           format_fixed6(r.slope_toydown) + '\n';
  }
  return out;
}

}  // namespace swaplab
