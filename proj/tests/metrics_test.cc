#include "swaplab/metrics.h"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "fixtures.h"
#include "swaplab/errors.h"
#include "swaplab/random.h"

namespace swaplab {
namespace {

using testing::hh;
using testing::line_geo;
using testing::mixed;

TEST(Error, Examples) {
  EXPECT_EQ(error(10, 10), 0);
  EXPECT_EQ(error(3, 7), -4);
}

TEST(Error, SwapErrorsSumToZeroStatewide) {
  Microdata md = generate_synthetic(testing::standard_params(), 2);
  SwapConfig cfg;
  cfg.swap_rate = 0.10;
  cfg.seed = 8;
  SwapResult r = select_and_swap(md, cfg);
  ErrorTable t = error_table(race_table(md, Level::kBlock),
                             race_table(r.swapped, Level::kBlock));
  std::map<Race, int64_t> sums;
  int64_t nonzero = 0;
  for (const ErrorRow& row : t.rows) {
    sums[row.race] += row.error;
    nonzero += row.error != 0;
  }
  for (auto [race, sum] : sums) EXPECT_EQ(sum, 0) << race_code(race);
  EXPECT_GT(nonzero, 0);
}

TEST(RelativeError, Examples) {
  EXPECT_DOUBLE_EQ(relative_error(5, 5), 1.0);
  EXPECT_DOUBLE_EQ(relative_error(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(relative_error(10, 15), 1.2);
  EXPECT_DOUBLE_EQ(relative_error(4, 0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(0, 4), 2.0);
}

TEST(VarianceEstimate, IdenticalTablesAreZero) {
  Microdata md = generate_synthetic(testing::standard_params(), 1);
  RegionTable t = race_table(md, Level::kBlock);
  EXPECT_EQ(variance_estimate(t, t), 0.0);
  EXPECT_EQ(mean_abs_error(t, t), 0.0);
}

TEST(VarianceEstimate, SingleCell) {
  CellCounts a = {{{"b1", Race::kWhite}, 4}};
  CellCounts b = {{{"b1", Race::kWhite}, 6}};
  EXPECT_DOUBLE_EQ(variance_estimate(a, b), 2.0);
}

TEST(VarianceEstimate, TableAndCellFormsAgree) {
  auto geo = line_geo(1, 2, 2);
  Microdata a(geo, {hh(1, 0, Race::kWhite, 3), hh(2, 3, Race::kBlack, 2)});
  Microdata b(geo, {hh(1, 1, Race::kWhite, 3), hh(2, 3, Race::kAsian, 2)});
  RegionTable ta = race_table(a, Level::kBlock);
  RegionTable tb = race_table(b, Level::kBlock);
  // Cells differ by 3, 3, 2, 2 over 4 blocks x 7 races.
  EXPECT_DOUBLE_EQ(variance_estimate(ta, tb), (9 + 9 + 4 + 4) / (2.0 * 28));
  EXPECT_DOUBLE_EQ(variance_estimate(ta, tb),
                   variance_estimate(cell_counts(ta), cell_counts(tb)));
  EXPECT_DOUBLE_EQ(mean_abs_error(ta, tb), 10.0 / 28);
  EXPECT_DOUBLE_EQ(mean_abs_error(ta, tb),
                   mean_abs_error(cell_counts(ta), cell_counts(tb)));
}

TEST(VarianceEstimate, UnbiasedForPlusMinusOne) {
  // Each cell is its true count plus or minus one with equal probability, so
  // the per-cell variance is 1.
  const int cells = 20;
  Rng rng(44);
  double sum = 0.0;
  const int pairs = 2000;
  CellCounts a, b;
  for (int p = 0; p < pairs; ++p) {
    for (int c = 0; c < cells; ++c) {
      const CellKey key{"b" + std::to_string(c), Race::kWhite};
      a[key] = 10 + (rng.bernoulli(0.5) ? 1 : -1);
      b[key] = 10 + (rng.bernoulli(0.5) ? 1 : -1);
    }
    sum += variance_estimate(a, b);
  }
  EXPECT_NEAR(sum / pairs, 1.0, 0.05);
}

TEST(VarianceEstimate, MisalignedKeysAreListed) {
  CellCounts a = {{{"b1", Race::kWhite}, 1}, {{"b2", Race::kWhite}, 1}};
  CellCounts b = {{{"b1", Race::kWhite}, 1}, {{"b3", Race::kWhite}, 1}};
  try {
    variance_estimate(a, b);
    FAIL() << "expected AlignmentError";
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("b2/w"), std::string::npos) << msg;
    EXPECT_NE(msg.find("b3/w"), std::string::npos) << msg;
  }
  RegionTable ta{Level::kBlock, {"x", "y"}, {RaceCounts{}, RaceCounts{}}};
  RegionTable tb{Level::kBlock, {"x", "z"}, {RaceCounts{}, RaceCounts{}}};
  try {
    variance_estimate(ta, tb);
    FAIL() << "expected AlignmentError";
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("y"), std::string::npos) << msg;
    EXPECT_NE(msg.find("z"), std::string::npos) << msg;
  }
  RegionTable tc{Level::kTract, {"x", "y"}, {RaceCounts{}, RaceCounts{}}};
  EXPECT_THROW(mean_abs_error(ta, tc), AlignmentError);
}

TEST(MeanAbsError, TwoCells) {
  CellCounts a = {{{"b1", Race::kWhite}, 5}, {{"b1", Race::kBlack}, 2}};
  CellCounts b = {{{"b1", Race::kWhite}, 2}, {{"b1", Race::kBlack}, 3}};
  EXPECT_DOUBLE_EQ(mean_abs_error(a, b), 2.0);
}

TEST(MeanAbsError, ReferenceConstantsAreDocumented) {
  EXPECT_DOUBLE_EQ(kReferenceMaeTopDownAlabama, 1.15536);
  EXPECT_DOUBLE_EQ(kReferenceMaeSwap2Alabama, 0.21892);
}

TEST(RacialEntropy, Examples) {
  EXPECT_DOUBLE_EQ(racial_entropy({100, 0, 0, 0, 0, 0, 0}), 0.0);
  EXPECT_NEAR(racial_entropy({50, 50, 0, 0, 0, 0, 0}), std::log(2.0), 1e-12);
  EXPECT_NEAR(racial_entropy({75, 25, 0, 0, 0, 0, 0}),
              -0.75 * std::log(0.75) - 0.25 * std::log(0.25), 1e-12);
  EXPECT_NEAR(racial_entropy({75, 25, 0, 0, 0, 0, 0}), 0.5623, 5e-5);
  EXPECT_DOUBLE_EQ(racial_entropy({0, 0, 0, 0, 0, 0, 0}), 0.0);
}

// Tract 0: households 1 (W) and 2 (W). Tract 1: 3 (B) and 4 (W).
Microdata two_tract_fixture() {
  auto geo = line_geo(1, 2, 1);
  return Microdata(geo, {hh(1, 0, Race::kWhite, 1), hh(2, 0, Race::kWhite, 1),
                         hh(3, 1, Race::kBlack, 1), hh(4, 1, Race::kWhite, 1)});
}

TEST(EntropyDecomposition, EmptyLogKeepsEveryStep) {
  Microdata md = two_tract_fixture();
  EntropyReport r = entropy_decomposition(md, SwapLog{});
  for (double s : r.mean_steps) EXPECT_DOUBLE_EQ(s, r.mean_before);
  for (const TractEntropy& t : r.tracts) {
    for (double s : t.steps) EXPECT_DOUBLE_EQ(s, t.before);
  }
}

TEST(EntropyDecomposition, SingleSwapByHand) {
  Microdata md = two_tract_fixture();
  SwapLog log;
  log.records.push_back({1, 3, 0, 1, 4});
  log.targets_count = 1;
  log.households_displaced = 2;
  EntropyReport r = entropy_decomposition(md, log);
  const double ln2 = std::log(2.0);
  // Before: {W, W} and {B, W}.
  EXPECT_NEAR(r.tracts[0].before, 0.0, 1e-12);
  EXPECT_NEAR(r.tracts[1].before, ln2, 1e-12);
  // 1: target leaves tract 0. 2: partner leaves tract 1.
  // 3: target joins tract 1. 4: partner joins tract 0.
  const std::array<double, 4> t0 = {0.0, 0.0, 0.0, ln2};
  const std::array<double, 4> t1 = {ln2, 0.0, 0.0, 0.0};
  for (int s = 0; s < 4; ++s) {
    EXPECT_NEAR(r.tracts[0].steps[s], t0[s], 1e-12) << "step " << s + 1;
    EXPECT_NEAR(r.tracts[1].steps[s], t1[s], 1e-12) << "step " << s + 1;
    EXPECT_NEAR(r.mean_steps[s], (t0[s] + t1[s]) / 2, 1e-12);
  }
  EXPECT_NEAR(r.mean_before, ln2 / 2, 1e-12);
}

TEST(EntropyDecomposition, FinalStepMatchesSwappedData) {
  Microdata md = generate_synthetic(testing::standard_params(), 3);
  SwapConfig cfg;
  cfg.swap_rate = 0.10;
  cfg.seed = 12;
  SwapResult r = select_and_swap(md, cfg);
  EntropyReport rep = entropy_decomposition(md, r.log);
  EXPECT_NEAR(rep.mean_after(),
              mean_entropy(race_table(r.swapped, Level::kTract)), 1e-12);
  EXPECT_NEAR(rep.mean_before, mean_entropy(race_table(md, Level::kTract)),
              1e-12);
}

TEST(EntropyDecomposition, AuditsTheLog) {
  Microdata md = two_tract_fixture();
  SwapLog unknown;
  unknown.records.push_back({1, 99, 0, 1, 4});
  EXPECT_THROW(entropy_decomposition(md, unknown), AuditError);
  SwapLog wrong_block;
  wrong_block.records.push_back({1, 3, 1, 1, 4});
  EXPECT_THROW(entropy_decomposition(md, wrong_block), AuditError);
  SwapLog reused;
  reused.records.push_back({1, 3, 0, 1, 4});
  reused.records.push_back({2, 3, 0, 1, 4});
  EXPECT_THROW(entropy_decomposition(md, reused), AuditError);
  EXPECT_THROW(swap_tabulations(md, reused), AuditError);
}

TEST(EntropyReportCsv, EndsWithMeanRow) {
  Microdata md = two_tract_fixture();
  std::string csv = entropy_report_csv(entropy_decomposition(md, SwapLog{}));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "tract_id,before,step1,step2,step3,step4");
  EXPECT_NE(csv.find("\nmean,0.346574,"), std::string::npos) << csv;
}

TEST(RuccRatios, IdenticalTablesGiveOne) {
  Microdata md = generate_synthetic(testing::standard_params(), 1);
  RegionTable c = race_table(md, Level::kCounty);
  RuccRatioTable t = rucc_ratio_table(c, c, md.geo());
  EXPECT_FALSE(t.rows.empty());
  for (const RuccRatioRow& r : t.rows) EXPECT_DOUBLE_EQ(r.ratio, 1.0);
}

TEST(RuccRatios, HandGroupedThreeCounties) {
  // Counties C0, C1, C2 have rucc 1, 2, 3; give C2 rucc 1 by hand instead.
  auto geo = std::make_shared<const GeoHierarchy>(
      "S",
      std::vector<GeoHierarchy::CountySpec>{{"C0", 1}, {"C1", 2}, {"C2", 1},
                                            {"C3", std::nullopt}},
      std::vector<GeoHierarchy::TractSpec>{
          {"T0", "C0"}, {"T1", "C1"}, {"T2", "C2"}, {"T3", "C3"}},
      std::vector<GeoHierarchy::BlockSpec>{{"B0", "T0", 0, 0},
                                           {"B1", "T1", 1, 0},
                                           {"B2", "T2", 2, 0},
                                           {"B3", "T3", 3, 0}});
  RegionTable a{Level::kCounty, {"C0", "C1", "C2", "C3"},
                {RaceCounts{6, 5, 0, 0, 0, 0, 0}, RaceCounts{3, 0, 0, 0, 0, 0, 0},
                 RaceCounts{2, 0, 0, 0, 0, 0, 0}, RaceCounts{1, 0, 0, 0, 0, 0, 0}}};
  RegionTable b{Level::kCounty, {"C0", "C1", "C2", "C3"},
                {RaceCounts{3, 0, 0, 0, 0, 0, 0}, RaceCounts{4, 0, 0, 0, 0, 0, 0},
                 RaceCounts{4, 0, 0, 0, 0, 0, 0}, RaceCounts{1, 0, 0, 0, 0, 0, 0}}};
  RuccRatioTable t = rucc_ratio_table(a, b, *geo);
  // Finite W ratios: C0 2.0 and C2 0.5 (rucc 1), C1 0.75 (rucc 2). C0's B
  // cell (5/0) and every 0/0 cell are excluded; C3 has no code.
  EXPECT_EQ(t.missing_rucc_counties, 1);
  EXPECT_EQ(t.excluded_cells, 3 * 6);
  ASSERT_EQ(t.rows.size(), 3u);
  ASSERT_EQ(t.groups.size(), 2u);
  EXPECT_EQ(t.groups[0].rucc, 1);
  EXPECT_EQ(t.groups[0].n, 2);
  EXPECT_DOUBLE_EQ(t.groups[0].min, 0.5);
  EXPECT_DOUBLE_EQ(t.groups[0].max, 2.0);
  EXPECT_DOUBLE_EQ(t.groups[0].mean, 1.25);
  EXPECT_DOUBLE_EQ(t.groups[0].median, 1.25);
  EXPECT_EQ(t.groups[1].rucc, 2);
  EXPECT_DOUBLE_EQ(t.groups[1].mean, 0.75);
  EXPECT_THROW(rucc_ratio_table(race_table(Microdata(geo, {hh(1, 0, Race::kWhite, 1)}),
                                           Level::kTract),
                                race_table(Microdata(geo, {hh(1, 0, Race::kWhite, 1)}),
                                           Level::kTract),
                                *geo),
               AlignmentError);
}

TEST(RuccRatios, ZeroDenominatorExcluded) {
  auto geo = line_geo(1, 1, 1);
  RegionTable a{Level::kCounty, {"C0"}, {RaceCounts{5, 0, 0, 0, 0, 0, 0}}};
  RegionTable b{Level::kCounty, {"C0"}, {RaceCounts{0, 0, 0, 0, 0, 0, 0}}};
  RuccRatioTable t = rucc_ratio_table(a, b, *geo);
  EXPECT_TRUE(t.rows.empty());
  EXPECT_EQ(t.excluded_cells, kNumRaces);
}

TEST(Tabulations, SingleWhiteTarget) {
  Microdata md(line_geo(1, 2, 1),
               {hh(1, 0, Race::kWhite, 2), hh(2, 1, Race::kBlack, 2),
                hh(3, 1, Race::kAsian, 1)});
  SwapLog log;
  log.records.push_back({1, 2, 0, 1, 4});
  SwapTabulations t = swap_tabulations(md, log);
  EXPECT_DOUBLE_EQ(t.race_pct_targets[race_index(Race::kWhite)], 100.0);
  EXPECT_DOUBLE_EQ(t.partner_pct[race_index(Race::kWhite)]
                                [race_index(Race::kBlack)],
                   100.0);
  EXPECT_NEAR(t.race_pct_overall[race_index(Race::kAsian)], 100.0 / 3, 1e-12);
  ASSERT_EQ(t.size_pct_targets.size(), 2u);
  EXPECT_DOUBLE_EQ(t.size_pct_targets[1], 100.0);
}

TEST(Tabulations, MatchBruteForceCrossTab) {
  Microdata md = generate_synthetic(testing::standard_params(), 5);
  SwapConfig cfg;
  cfg.swap_rate = 0.0005;  // 10 swaps
  cfg.seed = 3;
  SwapResult r = select_and_swap(md, cfg);
  ASSERT_EQ(r.log.records.size(), 10u);
  std::map<int64_t, Household> by_id;
  for (const Household& h : md.households()) by_id[h.id] = h;
  auto label = [](const Household& h) {
    int seen = -1;
    for (int k = 0; k < kNumRaces; ++k) {
      if (h.race_counts[k] == 0) continue;
      if (seen >= 0) return kMultipleRaces;
      seen = k;
    }
    return seen;
  };
  std::array<std::array<int64_t, kNumHouseholdRaceLabels>,
             kNumHouseholdRaceLabels>
      expected{};
  for (const SwapRecord& rec : r.log.records) {
    ++expected[label(by_id[rec.target_id])][label(by_id[rec.partner_id])];
  }
  SwapTabulations t = swap_tabulations(md, r.log);
  EXPECT_EQ(t.partner_counts, expected);
  for (int l = 0; l < kNumHouseholdRaceLabels; ++l) {
    int64_t n = 0;
    double pct = 0.0;
    for (int m = 0; m < kNumHouseholdRaceLabels; ++m) {
      n += t.partner_counts[l][m];
      pct += t.partner_pct[l][m];
    }
    if (n > 0) {
      EXPECT_NEAR(pct, 100.0, 0.01);
    }
  }
}

TEST(Tabulations, PartnerRowsSumToHundredOnLargeRun) {
  Microdata md = generate_synthetic(testing::standard_params(), 6);
  SwapConfig cfg;
  cfg.swap_rate = 0.10;
  cfg.seed = 2;
  SwapTabulations t = swap_tabulations(md, select_and_swap(md, cfg).log);
  for (int l = 0; l < kNumHouseholdRaceLabels; ++l) {
    double sum = 0.0;
    for (double v : t.partner_pct[l]) sum += v;
    if (sum > 0) {
      EXPECT_NEAR(sum, 100.0, 0.01);
    }
  }
  std::string csv = partner_matrix_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "target_race,w,b,aian,as,hpi,oth,two_plus,multiple");
}

TEST(ErrorTableCsv, Format) {
  RegionTable a{Level::kCounty, {"C0"}, {RaceCounts{10, 0, 0, 0, 0, 0, 0}}};
  RegionTable b{Level::kCounty, {"C0"}, {RaceCounts{15, 0, 0, 0, 0, 0, 0}}};
  std::string csv = error_table_csv(error_table(a, b));
  EXPECT_EQ(csv.substr(0, csv.find('\n') + 1),
            "region_id,race,count_1,count_2,error,relative_error\n");
  EXPECT_NE(csv.find("C0,w,10,15,-5,1.200000\n"), std::string::npos);
  EXPECT_NE(csv.find("C0,b,0,0,0,1.000000\n"), std::string::npos);
}

}  // namespace
}  // namespace swaplab
