#include "swaplab/swap_engine.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include "swaplab/errors.h"
#include "swaplab/random.h"

namespace swaplab {

namespace {

// Blocks beyond this count get their distance order computed per target
// instead of precomputed (the table is quadratic in the block count).
constexpr size_t kMaxPrecomputedBlocks = 2048;

int64_t ceil_count(double fraction, size_t n) {
  // Tolerate representation error such as 0.0125 * 10000 = 125.00000000000001.
  return static_cast<int64_t>(std::ceil(fraction * double(n) - 1e-9));
}

struct FlagKey {
  int32_t block;
  std::array<int32_t, kNumRaces> race_counts;
  int32_t hispanic;
  int32_t adults;

  bool operator==(const FlagKey&) const = default;
};

struct FlagKeyHash {
  size_t operator()(const FlagKey& k) const {
    uint64_t h = splitmix64(static_cast<uint64_t>(k.block));
    for (int32_t c : k.race_counts) h = splitmix64(h ^ uint64_t(c));
    h = splitmix64(h ^ uint64_t(k.hispanic));
    h = splitmix64(h ^ uint64_t(k.adults));
    return static_cast<size_t>(h);
  }
};

}  // namespace

void SwapConfig::validate() const {
  if (!(swap_rate > 0.0 && swap_rate < 1.0)) {
    throw ConfigError("swap_rate must lie in (0, 1)");
  }
  if (k_nearest < 1) throw ConfigError("k_nearest must be positive");
  const auto [p4, p3, p2, p1] = tier_probs;
  if (p4 != 1.0) throw ConfigError("tier 4 swap probability must be 1");
  if (!(0.0 <= p1 && p1 <= p2 && p2 <= p3 && p3 <= 1.0)) {
    throw ConfigError("tier probabilities must satisfy 0 <= p1 <= p2 <= p3 <= 1");
  }
}

SwapConfig swap_variant(std::string_view name) {
  SwapConfig cfg;
  if (name == "standard") {
    cfg.k_nearest = 10;
    cfg.tier_probs = {1.0, 0.6, 0.3, 0.1};
  } else if (name == "high_variance") {
    cfg.k_nearest = 100;
    cfg.tier_probs = {1.0, 0.3, 0.3, 0.1};
  } else {
    throw ConfigError("unknown swap variant '" + std::string(name) +
                      "' (expected standard or high_variance)");
  }
  return cfg;
}

std::vector<RiskProfile> risk_scores(const Microdata& md) {
  const auto& hh = md.households();
  std::unordered_map<FlagKey, int32_t, FlagKeyHash> counts;
  counts.reserve(hh.size());
  auto key_of = [](const Household& h) {
    // Size is implied by the race counts.
    return FlagKey{h.block, h.race_counts, h.hispanic_count, h.adult_count};
  };
  for (const Household& h : hh) ++counts[key_of(h)];
  std::vector<RiskProfile> out;
  out.reserve(hh.size());
  for (const Household& h : hh) {
    out.push_back({h.id, counts[key_of(h)] - 1});
  }
  return out;
}

TierFractions tier_fractions(double swap_rate) {
  if (!(swap_rate > 0.0 && swap_rate < 1.0)) {
    throw ConfigError("swap_rate must lie in (0, 1)");
  }
  if (swap_rate > kMaxTierFeasibleRate + 1e-12) {
    throw ConfigError("swap_rate " + std::to_string(swap_rate) +
                      " too large for tier fractions (maximum " +
                      std::to_string(kMaxTierFeasibleRate) + ")");
  }
  const double f4 = swap_rate / 1.6;
  return {f4, 2.0 * f4, 3.0 * f4, std::max(0.0, 1.0 - 6.0 * f4)};
}

TierFractions saturated_tier_fractions(double swap_rate) {
  if (swap_rate <= kMaxTierFeasibleRate) return tier_fractions(swap_rate);
  if (!(swap_rate < 1.0)) throw ConfigError("swap_rate must lie in (0, 1)");
  return {1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 0.0};
}

TierAssignment assign_tiers(std::span<const RiskProfile> profiles,
                            double swap_rate, uint64_t tie_seed) {
  return assign_tiers(profiles, tier_fractions(swap_rate), tie_seed);
}

TierAssignment assign_tiers(std::span<const RiskProfile> profiles,
                            const TierFractions& fractions,
                            uint64_t tie_seed) {
  const size_t n = profiles.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(tie_seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return profiles[a].risk_score < profiles[b].risk_score;
  });

  TierAssignment out;
  out.fractions = fractions;
  out.tiers.assign(n, 1);
  const int64_t n4 = std::min<int64_t>(ceil_count(fractions.f4, n), n);
  const int64_t n3 = std::min<int64_t>(ceil_count(fractions.f3, n), n - n4);
  const int64_t n2 =
      std::min<int64_t>(ceil_count(fractions.f2, n), n - n4 - n3);
  size_t pos = 0;
  auto fill = [&](int64_t count, int8_t tier) {
    for (int64_t i = 0; i < count; ++i) out.tiers[order[pos++]] = tier;
  };
  fill(n4, 4);
  fill(n3, 3);
  fill(n2, 2);
  out.tier_sizes = {static_cast<int64_t>(n) - n4 - n3 - n2, n2, n3, n4};
  return out;
}

std::vector<Candidate> candidate_partners(
    const Household& target, const Microdata& md,
    const std::unordered_set<int64_t>& exclusions) {
  const GeoHierarchy& geo = md.geo();
  const int32_t target_tract = geo.tract_of_block(target.block);
  const int32_t size = target.size();
  std::vector<Candidate> out;
  const auto& hh = md.households();
  for (size_t i = 0; i < hh.size(); ++i) {
    const Household& h = hh[i];
    if (h.size() != size || h.adult_count != target.adult_count) continue;
    if (geo.tract_of_block(h.block) == target_tract) continue;
    if (exclusions.contains(h.id)) continue;
    // All households of one Microdata share its state.
    out.push_back({h.id, i, geo.block_distance(target.block, h.block)});
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.household_id < b.household_id;
  });
  return out;
}

std::string swap_log_csv(const SwapLog& log, const GeoHierarchy& geo) {
  std::string out =
      "target_id,partner_id,target_block_before,partner_block_before,"
      "target_tier\n";
  for (const SwapRecord& r : log.records) {
    out += std::to_string(r.target_id) + ',' + std::to_string(r.partner_id) +
           ',' + geo.blocks()[r.target_block_before].id + ',' +
           geo.blocks()[r.partner_block_before].id + ',' +
           std::to_string(r.target_tier) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// SwapEngine

SwapEngine::SwapEngine(Microdata md) : md_(std::move(md)) {
  profiles_ = risk_scores(md_);

  const auto& hh = md_.households();
  const size_t num_blocks = md_.geo().blocks().size();

  // Key groups: (size, adults).
  std::map<std::pair<int32_t, int32_t>, int32_t> groups;
  group_of_.resize(hh.size());
  for (size_t i = 0; i < hh.size(); ++i) {
    auto key = std::make_pair(hh[i].size(), hh[i].adult_count);
    auto [it, inserted] =
        groups.emplace(key, static_cast<int32_t>(groups.size()));
    group_of_[i] = it->second;
  }
  num_groups_ = groups.size();

  offsets_.assign(num_groups_ * num_blocks + 1, 0);
  for (size_t i = 0; i < hh.size(); ++i) {
    ++offsets_[group_of_[i] * num_blocks + hh[i].block + 1];
  }
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  member_index_.assign(hh.size(), 0);
  std::vector<int32_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (size_t i = 0; i < hh.size(); ++i) {
    member_index_[cursor[group_of_[i] * num_blocks + hh[i].block]++] =
        static_cast<int32_t>(i);
  }
  for (size_t cell = 0; cell + 1 < offsets_.size(); ++cell) {
    std::sort(member_index_.begin() + offsets_[cell],
              member_index_.begin() + offsets_[cell + 1],
              [&](int32_t a, int32_t b) { return hh[a].id < hh[b].id; });
  }

  if (num_blocks <= kMaxPrecomputedBlocks) {
    block_order_.reserve(num_blocks * num_blocks);
    for (size_t b = 0; b < num_blocks; ++b) {
      auto row = blocks_by_distance(static_cast<int32_t>(b));
      block_order_.insert(block_order_.end(), row.begin(), row.end());
    }
  }
}

std::vector<int32_t> SwapEngine::blocks_by_distance(int32_t from) const {
  const GeoHierarchy& geo = md_.geo();
  const size_t num_blocks = geo.blocks().size();
  std::vector<std::pair<double, int32_t>> keyed(num_blocks);
  for (size_t b = 0; b < num_blocks; ++b) {
    keyed[b] = {geo.block_distance(from, static_cast<int32_t>(b)),
                static_cast<int32_t>(b)};
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int32_t> out(num_blocks);
  for (size_t b = 0; b < num_blocks; ++b) out[b] = keyed[b].second;
  return out;
}

void SwapEngine::nearest_partners_into(size_t target_index, size_t k,
                                       const std::vector<char>& displaced,
                                       std::span<const int32_t> block_order,
                                       std::vector<Candidate>& out) const {
  out.clear();
  if (k == 0) return;
  const GeoHierarchy& geo = md_.geo();
  const auto& hh = md_.households();
  const Household& target = hh[target_index];
  const int32_t target_tract = geo.tract_of_block(target.block);
  const size_t num_blocks = geo.blocks().size();
  const size_t base = group_of_[target_index] * num_blocks;

  // Blocks arrive in non-decreasing distance. Once k candidates are in hand,
  // keep going only through blocks tied with the one that completed the set,
  // so that id tie-breaking across equidistant blocks stays exact.
  double cutoff = std::numeric_limits<double>::infinity();
  for (int32_t b : block_order) {
    const double d = geo.block_distance(target.block, b);
    if (d > cutoff) break;
    if (geo.tract_of_block(b) == target_tract) continue;
    for (int32_t pos = offsets_[base + b]; pos < offsets_[base + b + 1];
         ++pos) {
      const int32_t i = member_index_[pos];
      if (displaced[i]) continue;
      out.push_back({hh[i].id, static_cast<size_t>(i), d});
    }
    if (out.size() >= k && cutoff == std::numeric_limits<double>::infinity()) {
      cutoff = d;
    }
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.household_id < b.household_id;
  });
  if (out.size() > k) out.resize(k);
}

std::vector<Candidate> SwapEngine::nearest_partners(
    size_t target_index, size_t k, const std::vector<char>& displaced) const {
  std::vector<Candidate> out;
  const int32_t block = md_.households()[target_index].block;
  const size_t num_blocks = md_.geo().blocks().size();
  if (!block_order_.empty()) {
    nearest_partners_into(
        target_index, k, displaced,
        std::span<const int32_t>(block_order_).subspan(block * num_blocks,
                                                        num_blocks),
        out);
  } else {
    nearest_partners_into(target_index, k, displaced,
                          blocks_by_distance(block), out);
  }
  return out;
}

SwapResult SwapEngine::run(const SwapConfig& cfg) const {
  cfg.validate();
  const auto& hh = md_.households();
  const size_t n = hh.size();
  const int64_t budget = std::llround(cfg.swap_rate * double(n));

  TierAssignment tiers = assign_tiers(
      profiles_, saturated_tier_fractions(cfg.swap_rate),
      substream(cfg.seed, "tier-ties"));

  SwapLog log;
  if (budget == 0) {
    return {md_, std::move(log), std::move(tiers)};
  }

  // Visit order: tier 4 first, shuffled within each tier.
  std::array<std::vector<int32_t>, 4> by_tier;
  for (size_t i = 0; i < n; ++i) {
    by_tier[tiers.tiers[i] - 1].push_back(static_cast<int32_t>(i));
  }
  Rng shuffle_rng(substream(cfg.seed, "tier-shuffle"));
  for (int t = 3; t >= 0; --t) shuffle_rng.shuffle(by_tier[t]);

  Rng rng(substream(cfg.seed, "selection"));
  std::vector<char> displaced(n, 0);
  std::vector<Household> out = hh;
  std::vector<Candidate> candidates;
  std::vector<int32_t> scratch_order;
  const size_t num_blocks = md_.geo().blocks().size();
  const size_t k = static_cast<size_t>(cfg.k_nearest);

  for (int t = 3; t >= 0 && log.targets_count < budget; --t) {
    const int tier = t + 1;
    const double p = cfg.prob_for_tier(tier);
    for (int32_t i : by_tier[t]) {
      if (log.targets_count >= budget) break;
      if (displaced[i]) continue;
      if (!rng.bernoulli(p)) continue;

      std::span<const int32_t> order;
      if (!block_order_.empty()) {
        order = std::span<const int32_t>(block_order_)
                    .subspan(hh[i].block * num_blocks, num_blocks);
      } else {
        scratch_order = blocks_by_distance(hh[i].block);
        order = scratch_order;
      }
      nearest_partners_into(static_cast<size_t>(i), k, displaced, order,
                            candidates);
      if (candidates.empty()) {
        // Stays eligible as somebody else's partner.
        ++log.skipped_targets;
        continue;
      }
      const Candidate& partner =
          candidates[rng.uniform_index(candidates.size())];
      const size_t j = partner.index;
      log.records.push_back(
          {hh[i].id, hh[j].id, hh[i].block, hh[j].block, tier});
      std::swap(out[i].block, out[j].block);
      displaced[i] = 1;
      displaced[j] = 1;
      ++log.targets_count;
    }
  }
  log.households_displaced = 2 * log.targets_count;
  return {Microdata(md_.geo_ptr(), std::move(out)), std::move(log),
          std::move(tiers)};
}

SwapResult select_and_swap(const Microdata& md, const SwapConfig& cfg) {
  return SwapEngine(md).run(cfg);
}

}  // namespace swaplab
