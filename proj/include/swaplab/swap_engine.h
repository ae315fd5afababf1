#ifndef SWAPLAB_SWAP_ENGINE_H_
#define SWAPLAB_SWAP_ENGINE_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "swaplab/geodata.h"

namespace swaplab {

// Parameters of one swapping run.
struct SwapConfig {
  // Fraction of households targeted; the run stops after
  // round(swap_rate * N) targets have been swapped.
  double swap_rate = 0.02;
  // The partner is drawn uniformly from the k closest legal candidates.
  int k_nearest = 10;
  // Targeting probability by tier, ordered (tier 4, tier 3, tier 2, tier 1).
  std::array<double, 4> tier_probs = {1.0, 0.6, 0.3, 0.1};
  uint64_t seed = 0;

  double prob_for_tier(int tier) const { return tier_probs[4 - tier]; }

  // Throws ConfigError.
  void validate() const;
};

// "standard" (k = 10, probs 1/.6/.3/.1) or "high_variance"
// (k = 100, probs 1/.3/.3/.1). Throws ConfigError for any other name.
SwapConfig swap_variant(std::string_view name);

// Re-identification risk of one household: the number of other households
// in the same block with identical race counts, Hispanic count, size and
// adult count. Lower is riskier.
struct RiskProfile {
  int64_t household_id = 0;
  int32_t risk_score = 0;
};

// One entry per household, in microdata order.
std::vector<RiskProfile> risk_scores(const Microdata& md);

// Share of households in each tier. Tiers 3 and 2 hold twice and three times
// as many households as tier 4, and tier 4 is sized so that all of tier 4
// plus p3 = 0.6 of half of tier 3 equals the swap rate: f4 = rate / 1.6.
struct TierFractions {
  double f4 = 0.0;
  double f3 = 0.0;
  double f2 = 0.0;
  double f1 = 0.0;
};

// Highest rate for which the fractions above are all in [0, 1].
inline constexpr double kMaxTierFeasibleRate = 1.6 / 6.0;

// Throws ConfigError unless 0 < rate <= kMaxTierFeasibleRate.
TierFractions tier_fractions(double swap_rate);
// Same as tier_fractions() below the feasibility limit; above it, tiers keep
// the 1:2:3 ratio and tier 1 is empty.
TierFractions saturated_tier_fractions(double swap_rate);

struct TierAssignment {
  std::vector<int8_t> tiers;  // 1..4, aligned with the profiles
  TierFractions fractions;
  std::array<int64_t, 4> tier_sizes{};  // households in tiers 1..4
};

// Sorts households by ascending risk score (ties in seeded random order) and
// splits the list: the first ceil(f4 * N) households form tier 4, the next
// ceil(f3 * N) tier 3, the next ceil(f2 * N) tier 2 and the rest tier 1.
TierAssignment assign_tiers(std::span<const RiskProfile> profiles,
                            double swap_rate, uint64_t tie_seed);
TierAssignment assign_tiers(std::span<const RiskProfile> profiles,
                            const TierFractions& fractions, uint64_t tie_seed);

struct Candidate {
  int64_t household_id = 0;
  size_t index = 0;  // position in Microdata::households()
  double distance = 0.0;
};

// Every legal partner for |target|: same size and adult count, different
// tract, same state, not in |exclusions|. Ordered by block-centroid distance,
// then household id. Exhaustive scan; SwapEngine uses an index instead.
std::vector<Candidate> candidate_partners(
    const Household& target, const Microdata& md,
    const std::unordered_set<int64_t>& exclusions);

struct SwapRecord {
  int64_t target_id = 0;
  int64_t partner_id = 0;
  int32_t target_block_before = 0;  // block indices into the geography
  int32_t partner_block_before = 0;
  int target_tier = 0;

  bool operator==(const SwapRecord&) const = default;
};

struct SwapLog {
  std::vector<SwapRecord> records;
  int64_t targets_count = 0;
  int64_t households_displaced = 0;
  // Selected targets that had no legal partner left.
  int64_t skipped_targets = 0;

  bool operator==(const SwapLog&) const = default;
};

// target_id,partner_id,target_block_before,partner_block_before,target_tier
std::string swap_log_csv(const SwapLog& log, const GeoHierarchy& geo);

struct SwapResult {
  Microdata swapped;
  SwapLog log;
  TierAssignment tiers;
};

// Precomputes everything about a microdata set that does not depend on the
// swap configuration (risk scores, key-matched partner index, block distance
// order) so that replicates only pay for the randomized part. Safe to share
// across threads; run() is const.
class SwapEngine {
 public:
  explicit SwapEngine(Microdata md);

  const Microdata& microdata() const { return md_; }
  const std::vector<RiskProfile>& profiles() const { return profiles_; }

  SwapResult run(const SwapConfig& cfg) const;

  // First min(k, |candidates|) entries of candidate_partners() for the
  // household at |target_index|, where |displaced| marks excluded households
  // by index.
  std::vector<Candidate> nearest_partners(
      size_t target_index, size_t k, const std::vector<char>& displaced) const;

 private:
  std::vector<int32_t> blocks_by_distance(int32_t from) const;
  void nearest_partners_into(size_t target_index, size_t k,
                             const std::vector<char>& displaced,
                             std::span<const int32_t> block_order,
                             std::vector<Candidate>& out) const;

  Microdata md_;
  std::vector<RiskProfile> profiles_;
  std::vector<int32_t> group_of_;  // key group of each household
  size_t num_groups_ = 0;
  // CSR layout: members of (group g, block b) are
  // member_index_[offsets_[g * B + b] .. offsets_[g * B + b + 1]), sorted by
  // household id.
  std::vector<int32_t> offsets_;
  std::vector<int32_t> member_index_;
  // Row b lists every block ordered by distance from b, then block index.
  // Empty when the geography is too large to precompute.
  std::vector<int32_t> block_order_;
};

// Convenience wrapper: SwapEngine(md).run(cfg).
SwapResult select_and_swap(const Microdata& md, const SwapConfig& cfg);

}  // namespace swaplab

#endif  // SWAPLAB_SWAP_ENGINE_H_
