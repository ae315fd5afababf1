#include "swaplab/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "swaplab/csv.h"
#include "swaplab/errors.h"

namespace swaplab {

double relative_error(int64_t c1, int64_t c2) {
  if (c2 == 0) return c1 == 0 ? 1.0 : 0.0;
  if (c1 == 0) return 2.0;
  return 2.0 / (1.0 + double(c1) / double(c2));
}

void check_aligned(const RegionTable& a, const RegionTable& b) {
  if (a.level != b.level) {
    throw AlignmentError("tables are at different levels (" +
                         std::string(level_name(a.level)) + " vs " +
                         std::string(level_name(b.level)) + ")");
  }
  if (a.counts.size() != a.ids.size() || b.counts.size() != b.ids.size()) {
    throw AlignmentError("table ids and counts differ in length");
  }
  if (a.ids == b.ids) return;
  std::set<std::string> sa(a.ids.begin(), a.ids.end());
  std::set<std::string> sb(b.ids.begin(), b.ids.end());
  std::string msg = "region keys differ;";
  auto list_missing = [&msg](const std::set<std::string>& from,
                             const std::set<std::string>& in,
                             const char* label) {
    int shown = 0;
    int64_t missing = 0;
    std::string names;
    for (const auto& id : from) {
      if (in.contains(id)) continue;
      ++missing;
      if (shown < 10) {
        names += (shown ? ", " : " ") + id;
        ++shown;
      }
    }
    if (missing > 0) {
      msg += " missing from " + std::string(label) + " (" +
             std::to_string(missing) + "):" + names + ";";
    }
  };
  list_missing(sa, sb, "second table");
  list_missing(sb, sa, "first table");
  if (sa == sb) msg += " same keys in a different order;";
  throw AlignmentError(msg);
}

ErrorTable error_table(const RegionTable& t1, const RegionTable& t2) {
  check_aligned(t1, t2);
  ErrorTable out;
  out.level = t1.level;
  out.rows.reserve(t1.ids.size() * kNumRaces);
  for (size_t i = 0; i < t1.ids.size(); ++i) {
    for (Race r : kAllRaces) {
      const int64_t c1 = t1.counts[i][race_index(r)];
      const int64_t c2 = t2.counts[i][race_index(r)];
      out.rows.push_back(
          {t1.ids[i], r, c1, c2, error(c1, c2), relative_error(c1, c2)});
    }
  }
  return out;
}

std::string error_table_csv(const ErrorTable& table) {
  std::string out = "region_id,race,count_1,count_2,error,relative_error\n";
  for (const ErrorRow& row : table.rows) {
    out += row.region_id + ',' + std::string(race_code(row.race)) + ',' +
           std::to_string(row.count_1) + ',' + std::to_string(row.count_2) +
           ',' + std::to_string(row.error) + ',' +
           format_fixed6(row.relative_error) + '\n';
  }
  return out;
}

double variance_estimate(const RegionTable& a, const RegionTable& b) {
  check_aligned(a, b);
  if (a.ids.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < a.counts.size(); ++i) {
    for (int r = 0; r < kNumRaces; ++r) {
      const double d = double(a.counts[i][r] - b.counts[i][r]);
      sum += d * d;
    }
  }
  return sum / (2.0 * double(a.counts.size()) * kNumRaces);
}

double mean_abs_error(const RegionTable& a, const RegionTable& b) {
  check_aligned(a, b);
  if (a.ids.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < a.counts.size(); ++i) {
    for (int r = 0; r < kNumRaces; ++r) {
      sum += std::fabs(double(a.counts[i][r] - b.counts[i][r]));
    }
  }
  return sum / (double(a.counts.size()) * kNumRaces);
}

CellCounts cell_counts(const RegionTable& table) {
  CellCounts out;
  for (size_t i = 0; i < table.ids.size(); ++i) {
    for (Race r : kAllRaces) {
      out[{table.ids[i], r}] = table.counts[i][race_index(r)];
    }
  }
  return out;
}

namespace {

void check_same_cells(const CellCounts& a, const CellCounts& b) {
  if (a.size() == b.size() &&
      std::equal(a.begin(), a.end(), b.begin(),
                 [](const auto& x, const auto& y) { return x.first == y.first; })) {
    return;
  }
  std::string msg = "cell keys differ;";
  auto list_missing = [&msg](const CellCounts& from, const CellCounts& in,
                             const char* label) {
    int shown = 0;
    int64_t missing = 0;
    std::string names;
    for (const auto& [key, count] : from) {
      if (in.contains(key)) continue;
      ++missing;
      if (shown < 10) {
        names += (shown ? ", " : " ") + key.first + "/" +
                 std::string(race_code(key.second));
        ++shown;
      }
    }
    if (missing > 0) {
      msg += " missing from " + std::string(label) + " (" +
             std::to_string(missing) + "):" + names + ";";
    }
  };
  list_missing(a, b, "second table");
  list_missing(b, a, "first table");
  throw AlignmentError(msg);
}

}  // namespace

double variance_estimate(const CellCounts& a, const CellCounts& b) {
  check_same_cells(a, b);
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    const double d = double(ia->second - ib->second);
    sum += d * d;
  }
  return sum / (2.0 * double(a.size()));
}

double mean_abs_error(const CellCounts& a, const CellCounts& b) {
  check_same_cells(a, b);
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    sum += std::fabs(double(ia->second - ib->second));
  }
  return sum / double(a.size());
}

double racial_entropy(const RaceCounts& counts) {
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  if (total <= 0) return 0.0;
  double h = 0.0;
  for (int64_t c : counts) {
    if (c <= 0) continue;
    const double p = double(c) / double(total);
    h -= p * std::log(p);
  }
  return h;
}

double mean_entropy(const RegionTable& table) {
  if (table.counts.empty()) return 0.0;
  double sum = 0.0;
  for (const RaceCounts& c : table.counts) sum += racial_entropy(c);
  return sum / double(table.counts.size());
}

namespace {

// Maps every household id in |md| to its index and checks that |log| is a
// legal record of swaps applied to |md|.
std::unordered_map<int64_t, size_t> audit_log(const Microdata& md,
                                              const SwapLog& log) {
  std::unordered_map<int64_t, size_t> index;
  index.reserve(md.size());
  for (size_t i = 0; i < md.size(); ++i) index.emplace(md.households()[i].id, i);
  std::unordered_set<int64_t> used;
  auto check = [&](int64_t id, int32_t block_before, const char* role) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw AuditError(std::string(role) + " " + std::to_string(id) +
                       " is not in the microdata");
    }
    if (md.households()[it->second].block != block_before) {
      throw AuditError(std::string(role) + " " + std::to_string(id) +
                       " was not in the logged block before swapping");
    }
    if (!used.insert(id).second) {
      throw AuditError("household " + std::to_string(id) +
                       " appears in more than one swap");
    }
  };
  for (const SwapRecord& r : log.records) {
    check(r.target_id, r.target_block_before, "target");
    check(r.partner_id, r.partner_block_before, "partner");
  }
  return index;
}

void add_household(std::vector<RaceCounts>& tracts, int32_t tract,
                   const Household& h, int sign) {
  for (int r = 0; r < kNumRaces; ++r) {
    tracts[tract][r] += sign * int64_t{h.race_counts[r]};
  }
}

double mean_of(const std::vector<RaceCounts>& tracts,
               std::vector<TractEntropy>& rows, int step) {
  double sum = 0.0;
  for (size_t t = 0; t < tracts.size(); ++t) {
    const double h = racial_entropy(tracts[t]);
    if (step < 0) {
      rows[t].before = h;
    } else {
      rows[t].steps[step] = h;
    }
    sum += h;
  }
  return tracts.empty() ? 0.0 : sum / double(tracts.size());
}

}  // namespace

EntropyReport entropy_decomposition(const Microdata& before,
                                    const SwapLog& log) {
  const auto index = audit_log(before, log);
  const GeoHierarchy& geo = before.geo();
  const auto& hh = before.households();
  RegionTable table = race_table(before, Level::kTract);
  std::vector<RaceCounts> tracts = table.counts;

  EntropyReport report;
  report.tracts.resize(tracts.size());
  for (size_t t = 0; t < tracts.size(); ++t) {
    report.tracts[t].tract_id = table.ids[t];
  }
  report.mean_before = mean_of(tracts, report.tracts, -1);

  auto apply = [&](int step, auto&& fn) {
    for (const SwapRecord& r : log.records) {
      fn(r, hh[index.at(r.target_id)], hh[index.at(r.partner_id)]);
    }
    report.mean_steps[step] = mean_of(tracts, report.tracts, step);
  };
  apply(0, [&](const SwapRecord& r, const Household& target, const Household&) {
    add_household(tracts, geo.tract_of_block(r.target_block_before), target, -1);
  });
  apply(1, [&](const SwapRecord& r, const Household&, const Household& partner) {
    add_household(tracts, geo.tract_of_block(r.partner_block_before), partner,
                  -1);
  });
  apply(2, [&](const SwapRecord& r, const Household& target, const Household&) {
    add_household(tracts, geo.tract_of_block(r.partner_block_before), target, 1);
  });
  apply(3, [&](const SwapRecord& r, const Household&, const Household& partner) {
    add_household(tracts, geo.tract_of_block(r.target_block_before), partner, 1);
  });
  return report;
}

std::string entropy_report_csv(const EntropyReport& report) {
  std::string out = "tract_id,before,step1,step2,step3,step4\n";
  auto row = [&out](const std::string& id, double before,
                    const std::array<double, 4>& steps) {
    out += id + ',' + format_fixed6(before);
    for (double s : steps) out += ',' + format_fixed6(s);
    out += '\n';
  };
  for (const TractEntropy& t : report.tracts) row(t.tract_id, t.before, t.steps);
  row("mean", report.mean_before, report.mean_steps);
  return out;
}

RuccRatioTable rucc_ratio_table(const RegionTable& counties_1,
                                const RegionTable& counties_2,
                                const GeoHierarchy& geo) {
  check_aligned(counties_1, counties_2);
  if (counties_1.level != Level::kCounty) {
    throw AlignmentError("rucc ratios need county-level tables");
  }
  RuccRatioTable out;
  std::map<std::pair<int, int>, std::vector<double>> grouped;
  for (size_t i = 0; i < counties_1.ids.size(); ++i) {
    auto county = geo.find_county(counties_1.ids[i]);
    if (!county || !geo.counties()[*county].rucc) {
      ++out.missing_rucc_counties;
      continue;
    }
    const int rucc = *geo.counties()[*county].rucc;
    for (Race r : kAllRaces) {
      const int64_t c1 = counties_1.counts[i][race_index(r)];
      const int64_t c2 = counties_2.counts[i][race_index(r)];
      if (c2 == 0) {
        ++out.excluded_cells;
        continue;
      }
      const double ratio = double(c1) / double(c2);
      out.rows.push_back({counties_1.ids[i], rucc, r, c1, c2, ratio});
      grouped[{rucc, race_index(r)}].push_back(ratio);
    }
  }
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const RuccRatioRow& a, const RuccRatioRow& b) {
                     if (a.rucc != b.rucc) return a.rucc < b.rucc;
                     return a.race < b.race;
                   });
  for (auto& [key, ratios] : grouped) {
    std::sort(ratios.begin(), ratios.end());
    RuccGroupSummary s;
    s.rucc = key.first;
    s.race = static_cast<Race>(key.second);
    s.n = static_cast<int64_t>(ratios.size());
    s.min = ratios.front();
    s.max = ratios.back();
    const size_t m = ratios.size() / 2;
    s.median = ratios.size() % 2 ? ratios[m] : 0.5 * (ratios[m - 1] + ratios[m]);
    double sum = 0.0;
    for (double v : ratios) sum += v;
    s.mean = sum / double(ratios.size());
    out.groups.push_back(s);
  }
  return out;
}

std::string rucc_rows_csv(const RuccRatioTable& table) {
  std::string out = "rucc,race,county_id,count_1,count_2,ratio\n";
  for (const RuccRatioRow& r : table.rows) {
    out += std::to_string(r.rucc) + ',' + std::string(race_code(r.race)) +
           ',' + r.county_id + ',' + std::to_string(r.count_1) + ',' +
           std::to_string(r.count_2) + ',' + format_fixed6(r.ratio) + '\n';
  }
  return out;
}

std::string rucc_groups_csv(const RuccRatioTable& table) {
  std::string out = "rucc,race,n,min,median,mean,max\n";
  for (const RuccGroupSummary& g : table.groups) {
    out += std::to_string(g.rucc) + ',' + std::string(race_code(g.race)) +
           ',' + std::to_string(g.n) + ',' + format_fixed6(g.min) + ',' +
           format_fixed6(g.median) + ',' + format_fixed6(g.mean) + ',' +
           format_fixed6(g.max) + '\n';
  }
  return out;
}

int household_race(const Household& h) {
  int label = -1;
  for (int r = 0; r < kNumRaces; ++r) {
    if (h.race_counts[r] == 0) continue;
    if (label >= 0) return kMultipleRaces;
    label = r;
  }
  return label < 0 ? kMultipleRaces : label;
}

std::string_view household_race_name(int label) {
  if (label == kMultipleRaces) return "multiple";
  return race_code(static_cast<Race>(label));
}

SwapTabulations swap_tabulations(const Microdata& before, const SwapLog& log) {
  const auto index = audit_log(before, log);
  const auto& hh = before.households();
  SwapTabulations t;

  int32_t max_size = 1;
  for (const Household& h : hh) max_size = std::max(max_size, h.size());
  std::vector<int64_t> size_all(max_size, 0), size_targets(max_size, 0);
  std::array<int64_t, kNumHouseholdRaceLabels> race_all{}, race_targets{};
  for (const Household& h : hh) {
    ++size_all[h.size() - 1];
    ++race_all[household_race(h)];
  }
  for (const SwapRecord& r : log.records) {
    const Household& target = hh[index.at(r.target_id)];
    const Household& partner = hh[index.at(r.partner_id)];
    ++size_targets[target.size() - 1];
    ++race_targets[household_race(target)];
    ++t.partner_counts[household_race(target)][household_race(partner)];
  }

  auto pct = [](int64_t part, int64_t whole) {
    return whole > 0 ? 100.0 * double(part) / double(whole) : 0.0;
  };
  const auto n_all = static_cast<int64_t>(hh.size());
  const auto n_targets = static_cast<int64_t>(log.records.size());
  for (int32_t s = 0; s < max_size; ++s) {
    t.size_pct_overall.push_back(pct(size_all[s], n_all));
    t.size_pct_targets.push_back(pct(size_targets[s], n_targets));
  }
  for (int l = 0; l < kNumHouseholdRaceLabels; ++l) {
    t.race_pct_overall[l] = pct(race_all[l], n_all);
    t.race_pct_targets[l] = pct(race_targets[l], n_targets);
    int64_t row_total = 0;
    for (int64_t c : t.partner_counts[l]) row_total += c;
    for (int m = 0; m < kNumHouseholdRaceLabels; ++m) {
      t.partner_pct[l][m] = pct(t.partner_counts[l][m], row_total);
    }
  }
  return t;
}

std::string size_distribution_csv(const SwapTabulations& t) {
  std::string out = "size,pct_overall,pct_targets\n";
  for (size_t s = 0; s < t.size_pct_overall.size(); ++s) {
    out += std::to_string(s + 1) + ',' + format_fixed6(t.size_pct_overall[s]) +
           ',' + format_fixed6(t.size_pct_targets[s]) + '\n';
  }
  return out;
}

std::string target_race_csv(const SwapTabulations& t) {
  std::string out = "race,pct_overall,pct_targets\n";
  for (int l = 0; l < kNumHouseholdRaceLabels; ++l) {
    out += std::string(household_race_name(l)) + ',' +
           format_fixed6(t.race_pct_overall[l]) + ',' +
           format_fixed6(t.race_pct_targets[l]) + '\n';
  }
  return out;
}

std::string partner_matrix_csv(const SwapTabulations& t) {
  std::string out = "target_race";
  for (int l = 0; l < kNumHouseholdRaceLabels; ++l) {
    out += ',' + std::string(household_race_name(l));
  }
  out += '\n';
  for (int l = 0; l < kNumHouseholdRaceLabels; ++l) {
    out += std::string(household_race_name(l));
    for (double v : t.partner_pct[l]) out += ',' + format_fixed6(v);
    out += '\n';
  }
  return out;
}

}  // namespace swaplab
