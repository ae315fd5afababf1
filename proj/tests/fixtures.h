#ifndef SWAPLAB_TESTS_FIXTURES_H_
#define SWAPLAB_TESTS_FIXTURES_H_

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "swaplab/geodata.h"

namespace swaplab::testing {

// counties x tracts x blocks with block b (global index) at (b, 0), so the
// distance between blocks i and j is |i - j|. County c gets rucc 1 + c % 9.
inline std::shared_ptr<const GeoHierarchy> line_geo(int counties,
                                                    int tracts_per_county,
                                                    int blocks_per_tract) {
  std::vector<GeoHierarchy::CountySpec> cs;
  std::vector<GeoHierarchy::TractSpec> ts;
  std::vector<GeoHierarchy::BlockSpec> bs;
  int b = 0;
  for (int c = 0; c < counties; ++c) {
    const std::string cid = "C" + std::to_string(c);
    cs.push_back({cid, 1 + c % 9});
    for (int t = 0; t < tracts_per_county; ++t) {
      const std::string tid = cid + "T" + std::to_string(t);
      ts.push_back({tid, cid});
      for (int k = 0; k < blocks_per_tract; ++k, ++b) {
        bs.push_back({tid + "B" + std::to_string(k), tid, double(b), 0.0});
      }
    }
  }
  return std::make_shared<const GeoHierarchy>("S", cs, ts, bs);
}

// Household with |n| members of race |r|, all adults unless |adults| given.
inline Household hh(int64_t id, int32_t block, Race r, int32_t n,
                    int32_t adults = -1, int32_t hispanic = 0) {
  Household h;
  h.id = id;
  h.block = block;
  h.race_counts[race_index(r)] = n;
  h.adult_count = adults < 0 ? n : adults;
  h.hispanic_count = hispanic;
  return h;
}

inline Household mixed(int64_t id, int32_t block,
                       std::array<int32_t, kNumRaces> races, int32_t adults,
                       int32_t hispanic = 0) {
  Household h;
  h.id = id;
  h.block = block;
  h.race_counts = races;
  h.adult_count = adults;
  h.hispanic_count = hispanic;
  return h;
}

// 20,000 households, 4 counties of 10 tracts of 10 blocks.
inline SynthParams standard_params(double segregation = 0.9) {
  SynthParams p = default_synth_params();
  p.segregation = segregation;
  return p;
}

}  // namespace swaplab::testing

#endif  // SWAPLAB_TESTS_FIXTURES_H_
