#include "swaplab/toydown.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "swaplab/csv.h"
#include "swaplab/errors.h"
#include "swaplab/metrics.h"
#include "swaplab/random.h"

namespace swaplab {

void ToyDownConfig::validate() const {
  if (!(epsilon_total > 0.0) || !std::isfinite(epsilon_total)) {
    throw ConfigError("epsilon must be a positive finite number");
  }
  double sum = 0.0;
  for (double w : level_weights) {
    if (!(w > 0.0)) throw ConfigError("level weights must be positive");
    sum += w;
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("level weights must sum to 1");
  }
}

CountTree build_tree(const Microdata& md) {
  CountTree tree;
  tree.geo = md.geo_ptr();
  for (Level l : kAllLevels) {
    RegionTable t = race_table(md, l);
    auto& nodes = tree.at(l);
    nodes.resize(t.counts.size());
    for (size_t i = 0; i < t.counts.size(); ++i) {
      for (int r = 0; r < kNumRaces; ++r) {
        nodes[i][r] = static_cast<double>(t.counts[i][r]);
      }
    }
  }
  return tree;
}

CountTree add_noise(const CountTree& tree, const ToyDownConfig& cfg) {
  cfg.validate();
  CountTree noisy = tree;
  Rng rng(cfg.seed);
  for (Level l : kAllLevels) {
    const double scale =
        1.0 / (cfg.level_weights[static_cast<int>(l)] * cfg.epsilon_total);
    for (RaceVector& node : noisy.at(l)) {
      for (double& v : node) v += rng.laplace(scale);
    }
  }
  return noisy;
}

std::vector<double> project_to_simplex(std::span<const double> noisy,
                                       double total) {
  const size_t n = noisy.size();
  std::vector<double> out(n, 0.0);
  if (n == 0 || !(total > 0.0)) return out;
  std::vector<char> active(n, 1);
  size_t num_active = n;
  while (num_active > 0) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (active[i]) sum += noisy[i];
    }
    const double correction = (sum - total) / double(num_active);
    bool clamped = false;
    for (size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      const double v = noisy[i] - correction;
      if (v < 0.0) {
        active[i] = 0;
        --num_active;
        out[i] = 0.0;
        clamped = true;
      } else {
        out[i] = v;
      }
    }
    if (!clamped) break;
  }
  return out;
}

std::vector<int64_t> largest_remainder_round(std::span<const double> values,
                                             int64_t total) {
  const size_t n = values.size();
  std::vector<int64_t> out(n);
  std::vector<std::pair<double, size_t>> remainders(n);
  int64_t assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    const double f = std::floor(values[i]);
    out[i] = static_cast<int64_t>(f);
    assigned += out[i];
    remainders[i] = {values[i] - f, i};
  }
  int64_t extra = total - assigned;
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t j = 0; j < n && extra > 0; ++j, --extra) {
    ++out[remainders[j].second];
  }
  // Over-assignment can only come from floating drift; take units back from
  // the smallest remainders.
  for (size_t j = n; j-- > 0 && extra < 0;) {
    if (out[remainders[j].second] > 0) {
      --out[remainders[j].second];
      ++extra;
    }
  }
  return out;
}

CountTree postprocess(const CountTree& noisy) {
  const GeoHierarchy& geo = *noisy.geo;
  CountTree real = noisy;

  for (double& v : real.at(Level::kState)[0]) v = std::max(0.0, v);

  std::vector<double> child_values;
  for (Level parent_level : {Level::kState, Level::kCounty, Level::kTract}) {
    const Level child_level = static_cast<Level>(int(parent_level) + 1);
    auto& parents = real.at(parent_level);
    auto& kids = real.at(child_level);
    for (size_t p = 0; p < parents.size(); ++p) {
      auto children = geo.children(parent_level, p);
      child_values.resize(children.size());
      for (int r = 0; r < kNumRaces; ++r) {
        for (size_t c = 0; c < children.size(); ++c) {
          child_values[c] = noisy.at(child_level)[children[c]][r];
        }
        auto projected = project_to_simplex(child_values, parents[p][r]);
        for (size_t c = 0; c < children.size(); ++c) {
          kids[children[c]][r] = projected[c];
        }
      }
    }
  }

  // Integer leaves, then exact sums upward.
  CountTree out;
  out.geo = noisy.geo;
  for (Level l : kAllLevels) {
    out.at(l).assign(real.at(l).size(), RaceVector{});
  }
  for (size_t t = 0; t < geo.tracts().size(); ++t) {
    auto blocks = geo.children(Level::kTract, t);
    child_values.resize(blocks.size());
    for (int r = 0; r < kNumRaces; ++r) {
      for (size_t c = 0; c < blocks.size(); ++c) {
        child_values[c] = real.at(Level::kBlock)[blocks[c]][r];
      }
      const int64_t total = std::llround(real.at(Level::kTract)[t][r]);
      auto rounded = largest_remainder_round(child_values, total);
      for (size_t c = 0; c < blocks.size(); ++c) {
        out.at(Level::kBlock)[blocks[c]][r] = static_cast<double>(rounded[c]);
      }
    }
  }
  for (Level parent_level : {Level::kTract, Level::kCounty, Level::kState}) {
    const Level child_level = static_cast<Level>(int(parent_level) + 1);
    auto& parents = out.at(parent_level);
    for (size_t p = 0; p < parents.size(); ++p) {
      for (int32_t c : geo.children(parent_level, p)) {
        for (int r = 0; r < kNumRaces; ++r) {
          parents[p][r] += out.at(child_level)[c][r];
        }
      }
    }
  }
  return out;
}

RegionTable leaf_table(const CountTree& finalized) {
  const GeoHierarchy& geo = *finalized.geo;
  RegionTable t;
  t.level = Level::kBlock;
  const auto& leaves = finalized.at(Level::kBlock);
  t.ids.reserve(leaves.size());
  t.counts.resize(leaves.size());
  for (size_t b = 0; b < leaves.size(); ++b) {
    t.ids.push_back(geo.blocks()[b].id);
    for (int r = 0; r < kNumRaces; ++r) {
      t.counts[b][r] = std::llround(leaves[b][r]);
    }
  }
  return t;
}

ToyDown::ToyDown(const Microdata& md) : tree_(build_tree(md)) {}

RegionTable ToyDown::run(const ToyDownConfig& cfg) const {
  return leaf_table(postprocess(add_noise(tree_, cfg)));
}

RegionTable run_toydown(const Microdata& md, const ToyDownConfig& cfg) {
  return ToyDown(md).run(cfg);
}

std::string block_table_csv(const RegionTable& table) {
  std::string out = "block_id,w,b,aian,as,hpi,oth,two_plus\n";
  for (size_t i = 0; i < table.ids.size(); ++i) {
    out += table.ids[i];
    for (int64_t c : table.counts[i]) {
      out += ',';
      out += std::to_string(c);
    }
    out += '\n';
  }
  return out;
}

double toydown_variance(const ToyDown& toydown, double epsilon,
                        int paired_runs, uint64_t seed,
                        const std::array<double, 4>& level_weights) {
  if (paired_runs < 1) throw ConfigError("paired_runs must be positive");
  double sum = 0.0;
  for (int j = 0; j < paired_runs; ++j) {
    ToyDownConfig a{epsilon, level_weights, derive_seed(seed, "pair-a", j)};
    ToyDownConfig b{epsilon, level_weights, derive_seed(seed, "pair-b", j)};
    sum += variance_estimate(toydown.run(a), toydown.run(b));
  }
  return sum / paired_runs;
}

CalibrationResult calibrate_epsilon(const Microdata& md,
                                    double target_variance,
                                    const CalibrationOptions& options) {
  if (!(target_variance > 0.0)) {
    throw ConfigError("target variance must be positive");
  }
  if (!(options.epsilon_lo > 0.0 && options.epsilon_lo < options.epsilon_hi)) {
    throw ConfigError("calibration bracket must satisfy 0 < lo < hi");
  }
  ToyDown toydown(md);
  CalibrationResult result;
  auto probe = [&](double eps) {
    const double v =
        toydown_variance(toydown, eps, options.paired_runs, options.seed);
    result.probes.emplace_back(eps, v);
    return v;
  };

  double lo = options.epsilon_lo;
  double hi = options.epsilon_hi;
  const double v_lo = probe(lo);
  const double v_hi = probe(hi);
  if (!(v_lo > target_variance && target_variance > v_hi)) {
    throw CalibrationError(
        "bracket [" + format_double(lo) + ", " + format_double(hi) +
            "] does not straddle target " + format_double(target_variance) +
            " (estimates " + format_double(v_lo) + ", " + format_double(v_hi) +
            ")",
        v_lo, v_hi);
  }

  double best_gap = std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iterations; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double v = probe(mid);
    const double gap = std::fabs(v - target_variance) / target_variance;
    if (gap < best_gap) {
      best_gap = gap;
      result.epsilon = mid;
      result.achieved_variance = v;
    }
    if (gap < options.tolerance) {
      result.converged = true;
      break;
    }
    if (v > target_variance) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return result;
}

}  // namespace swaplab
