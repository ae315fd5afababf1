#include "swaplab/toydown.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fixtures.h"
#include "swaplab/errors.h"
#include "swaplab/metrics.h"
#include "swaplab/random.h"

namespace swaplab {
namespace {

using testing::hh;
using testing::line_geo;
using testing::mixed;

// Exact Euclidean projection onto {y >= 0, sum y = total} by enumerating
// every support set: on support S the KKT point is y_i = x_i - tau with
// tau = (sum_S x - total) / |S|, feasible when those entries are >= 0.
std::vector<double> projection_oracle(const std::vector<double>& x,
                                      double total) {
  const size_t n = x.size();
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (uint32_t mask = 1; mask < (1u << n); ++mask) {
    double sum = 0.0;
    int count = 0;
    for (size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        sum += x[i];
        ++count;
      }
    }
    const double tau = (sum - total) / count;
    std::vector<double> y(n, 0.0);
    bool feasible = true;
    for (size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        y[i] = x[i] - tau;
        feasible &= y[i] >= -1e-12;
      }
    }
    if (!feasible) continue;
    double dist = 0.0;
    for (size_t i = 0; i < n; ++i) dist += (y[i] - x[i]) * (y[i] - x[i]);
    if (dist < best_dist) {
      best_dist = dist;
      best = y;
    }
  }
  return best;
}

Microdata three_tract_fixture() {
  auto geo = line_geo(1, 3, 2);
  return Microdata(geo, {
      mixed(1, 0, {2, 0, 0, 0, 0, 0, 0}, 2),
      mixed(2, 1, {0, 3, 0, 0, 0, 0, 0}, 2),
      mixed(3, 1, {1, 0, 1, 0, 0, 0, 0}, 1),
      mixed(4, 2, {0, 0, 0, 4, 0, 0, 0}, 2),
      mixed(5, 3, {0, 0, 0, 0, 1, 1, 0}, 2),
      mixed(6, 4, {0, 0, 0, 0, 0, 0, 2}, 1),
      mixed(7, 5, {5, 0, 0, 0, 0, 0, 0}, 3),
      mixed(8, 5, {0, 1, 0, 0, 0, 0, 1}, 2),
  });
}

void expect_consistent(const CountTree& t) {
  const GeoHierarchy& geo = *t.geo;
  for (Level level : {Level::kState, Level::kCounty, Level::kTract}) {
    const Level child = static_cast<Level>(static_cast<int>(level) + 1);
    for (size_t i = 0; i < t.at(level).size(); ++i) {
      RaceVector sum{};
      for (int32_t c : geo.children(level, i)) {
        for (int r = 0; r < kNumRaces; ++r) sum[r] += t.at(child)[c][r];
      }
      for (int r = 0; r < kNumRaces; ++r) {
        ASSERT_EQ(sum[r], t.at(level)[i][r]);
      }
    }
  }
  for (const auto& level : t.levels) {
    for (const RaceVector& v : level) {
      for (double x : v) {
        ASSERT_GE(x, 0.0);
        ASSERT_EQ(x, std::round(x));
      }
    }
  }
}

TEST(BuildTree, SingleBlockIsAPath) {
  auto geo = line_geo(1, 1, 1);
  Microdata md(geo, {mixed(1, 0, {3, 1, 0, 0, 0, 0, 2}, 4)});
  CountTree t = build_tree(md);
  for (const auto& level : t.levels) {
    ASSERT_EQ(level.size(), 1u);
    EXPECT_EQ(level[0], (RaceVector{3, 1, 0, 0, 0, 0, 2}));
  }
}

TEST(BuildTree, MatchesBruteForceAggregation) {
  Microdata md = three_tract_fixture();
  CountTree t = build_tree(md);
  const GeoHierarchy& geo = md.geo();
  for (Level level : kAllLevels) {
    std::vector<RaceVector> expected(geo.num_regions(level), RaceVector{});
    for (const Household& h : md.households()) {
      const int32_t region = geo.region_of_block(level, h.block);
      for (int r = 0; r < kNumRaces; ++r) {
        expected[region][r] += h.race_counts[r];
      }
    }
    EXPECT_EQ(t.at(level), expected) << level_name(level);
  }
  // Tract 1 holds blocks 2 and 3.
  EXPECT_EQ(t.at(Level::kTract)[1], (RaceVector{0, 0, 0, 4, 1, 1, 0}));
}

TEST(AddNoise, VanishingScaleAndDeterminism) {
  Microdata md = three_tract_fixture();
  CountTree t = build_tree(md);
  ToyDownConfig cfg;
  cfg.epsilon_total = 1e9;
  cfg.seed = 3;
  CountTree noisy = add_noise(t, cfg);
  for (int l = 0; l < 4; ++l) {
    for (size_t i = 0; i < t.levels[l].size(); ++i) {
      for (int r = 0; r < kNumRaces; ++r) {
        EXPECT_LT(std::fabs(noisy.levels[l][i][r] - t.levels[l][i][r]), 1e-6);
      }
    }
  }
  cfg.epsilon_total = 1.0;
  CountTree a = add_noise(t, cfg);
  CountTree b = add_noise(t, cfg);
  EXPECT_EQ(a.levels, b.levels);
}

TEST(AddNoise, LeafVarianceMatchesLaplace) {
  auto geo = line_geo(1, 1, 1);
  Microdata md(geo, {mixed(1, 0, {10, 10, 10, 10, 10, 10, 10}, 70)});
  CountTree t = build_tree(md);
  ToyDownConfig cfg;
  cfg.epsilon_total = 2.0;
  const double eps_leaf = cfg.level_weights[3] * cfg.epsilon_total;
  double sq = 0.0;
  int n = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    cfg.seed = derive_seed(1, "leaf", rep);
    CountTree noisy = add_noise(t, cfg);
    for (int r = 0; r < kNumRaces; ++r) {
      const double e = noisy.at(Level::kBlock)[0][r] - 10.0;
      sq += e * e;
      ++n;
    }
  }
  const double expected = 2.0 / (eps_leaf * eps_leaf);
  EXPECT_NEAR(sq / n / expected, 1.0, 0.05);
}

TEST(ProjectToSimplex, HandExamples) {
  std::vector<double> a = project_to_simplex(std::vector<double>{12, 4}, 10);
  EXPECT_NEAR(a[0], 9.0, 1e-12);
  EXPECT_NEAR(a[1], 1.0, 1e-12);
  std::vector<double> b = project_to_simplex(std::vector<double>{-2, 9}, 5);
  EXPECT_NEAR(b[0], 0.0, 1e-12);
  EXPECT_NEAR(b[1], 5.0, 1e-12);
  std::vector<double> c = project_to_simplex(std::vector<double>{-1, -3}, 0);
  EXPECT_EQ(c, (std::vector<double>{0, 0}));
}

TEST(ProjectToSimplex, MatchesKktEnumeration) {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const size_t n = 1 + rng.uniform_index(5);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform() * 40.0 - 15.0;
    const double total = rng.uniform() * 30.0;
    std::vector<double> got = project_to_simplex(x, total);
    std::vector<double> want = projection_oracle(x, total);
    ASSERT_EQ(got.size(), n);
    for (size_t i = 0; i < n; ++i) {
      ASSERT_NEAR(got[i], want[i], 1e-6) << "trial " << trial;
    }
  }
}

TEST(LargestRemainder, RoundsToTotal) {
  EXPECT_EQ(largest_remainder_round(std::vector<double>{1.4, 2.6, 0.0}, 4),
            (std::vector<int64_t>{1, 3, 0}));
  // Ties go to the lower index.
  EXPECT_EQ(largest_remainder_round(std::vector<double>{0.5, 0.5}, 1),
            (std::vector<int64_t>{1, 0}));
  EXPECT_EQ(largest_remainder_round(std::vector<double>{2.0, 3.0}, 5),
            (std::vector<int64_t>{2, 3}));
}

TEST(Postprocess, ConsistentTreeIsFixedPoint) {
  Microdata md = three_tract_fixture();
  CountTree t = build_tree(md);
  CountTree out = postprocess(t);
  EXPECT_EQ(out.levels, t.levels);
}

TEST(Postprocess, ConsistentAndNonNegativeForManySeeds) {
  SynthParams p = testing::standard_params();
  p.n_households = 2000;
  p.counties = 2;
  p.tracts_per_county = 3;
  p.blocks_per_tract = 5;
  Microdata md = generate_synthetic(p, 1);
  CountTree t = build_tree(md);
  for (uint64_t seed = 0; seed < 100; ++seed) {
    ToyDownConfig cfg;
    cfg.epsilon_total = 0.5;
    cfg.seed = seed;
    expect_consistent(postprocess(add_noise(t, cfg)));
  }
}

TEST(Postprocess, ZeroParentWithNegativeChildren) {
  auto geo = line_geo(1, 1, 2);
  Microdata md(geo, {hh(1, 0, Race::kWhite, 1)});
  CountTree noisy = build_tree(md);
  for (auto& level : noisy.levels) {
    for (auto& v : level) v[1] = -2.0;  // race B negative everywhere
  }
  CountTree out = postprocess(noisy);
  expect_consistent(out);
  for (const auto& level : out.levels) {
    for (const auto& v : level) EXPECT_EQ(v[1], 0.0);
  }
}

TEST(RunToydown, HugeEpsilonRecoversInput) {
  SynthParams p = testing::standard_params();
  p.n_households = 3000;
  Microdata md = generate_synthetic(p, 2);
  ToyDownConfig cfg;
  cfg.epsilon_total = 1e9;
  cfg.seed = 4;
  EXPECT_EQ(run_toydown(md, cfg), race_table(md, Level::kBlock));
}

TEST(RunToydown, StateTotalSpreadMatchesRootNoise) {
  Microdata md = generate_synthetic(testing::standard_params(), 3);
  ToyDown toydown(md);
  const RegionTable truth = race_table(md, Level::kState);
  ToyDownConfig cfg;
  cfg.epsilon_total = 0.1;
  const double eps_state = cfg.level_weights[0] * cfg.epsilon_total;
  const int reps = 5000;
  for (Race race : {Race::kWhite, Race::kBlack}) {
    const int r = race_index(race);
    double sum = 0.0, sq = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      cfg.seed = derive_seed(9, "state-spread", rep);
      RegionTable state =
          rollup(toydown.run(cfg), md.geo(), Level::kState);
      const double e = double(state.counts[0][r] - truth.counts[0][r]);
      sum += e;
      sq += e * e;
    }
    const double mean = sum / reps;
    const double sd = std::sqrt(sq / reps - mean * mean);
    EXPECT_NEAR(sd / (std::sqrt(2.0) / eps_state), 1.0, 0.05)
        << race_code(race);
  }
}

TEST(RunToydown, LeafErrorUnbiasedForLargeCounts) {
  auto geo = line_geo(1, 1, 2);
  std::vector<Household> hs;
  // Both races in both blocks, so no sibling is clamped at zero.
  for (int i = 0; i < 2000; ++i) {
    hs.push_back(hh(i + 1, i % 2, static_cast<Race>((i / 2) % 2), 5));
  }
  Microdata md(geo, hs);
  ToyDown toydown(md);
  const RegionTable truth = race_table(md, Level::kBlock);
  ToyDownConfig cfg;
  cfg.epsilon_total = 10.0;  // scale 0.4, counts 2500 >= 50 x scale
  const int reps = 2000;
  std::array<double, 2> sum{};
  for (int rep = 0; rep < reps; ++rep) {
    cfg.seed = derive_seed(2, "unbiased", rep);
    RegionTable out = toydown.run(cfg);
    for (int b = 0; b < 2; ++b) {
      sum[b] += double(out.counts[b][0] - truth.counts[b][0]);
    }
  }
  for (double s : sum) EXPECT_LT(std::fabs(s / reps), 0.1);
}

TEST(ToyDownConfig, Validation) {
  ToyDownConfig c;
  c.epsilon_total = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ToyDownConfig{};
  c.level_weights = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_DOUBLE_EQ(ToyDownConfig{}.epsilon_total, 3.26);
}

TEST(Calibration, NoiselessProbeIsZero) {
  Microdata md = three_tract_fixture();
  EXPECT_LT(toydown_variance(ToyDown(md), 1e9, 5, 1), 1e-12);
}

TEST(Calibration, BracketMissReportsBothEstimates) {
  SynthParams p = testing::standard_params();
  p.n_households = 2000;
  Microdata md = generate_synthetic(p, 5);
  CalibrationOptions opt;
  opt.epsilon_lo = 50.0;
  opt.epsilon_hi = 100.0;
  try {
    calibrate_epsilon(md, 100.0, opt);
    FAIL() << "expected CalibrationError";
  } catch (const CalibrationError& e) {
    EXPECT_LT(e.variance_lo(), 100.0);
    EXPECT_GE(e.variance_lo(), e.variance_hi());
  }
}

TEST(Calibration, RecoversPlantedEpsilonOnSmallFixture) {
  SynthParams p = testing::standard_params();
  p.n_households = 4000;
  Microdata md = generate_synthetic(p, 6);
  CalibrationOptions opt;
  opt.paired_runs = 20;
  opt.seed = 31;
  const double target = toydown_variance(ToyDown(md), 2.0, 20, 1234);
  CalibrationResult r = calibrate_epsilon(md, target, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.epsilon / 2.0, 1.0, 0.15);
  EXPECT_LT(std::fabs(r.achieved_variance - target) / target, 0.05);
}

TEST(BlockTableCsv, Header) {
  Microdata md = three_tract_fixture();
  std::string csv = block_table_csv(race_table(md, Level::kBlock));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "block_id,w,b,aian,as,hpi,oth,two_plus");
  EXPECT_NE(csv.find("C0T0B0,2,0,0,0,0,0,0\n"), std::string::npos);
}

}  // namespace
}  // namespace swaplab
