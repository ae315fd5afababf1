#ifndef SWAPLAB_RUN_CONFIG_H_
#define SWAPLAB_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "swaplab/ecoreg.h"
#include "swaplab/geodata.h"
#include "swaplab/swap_engine.h"
#include "swaplab/toydown.h"

namespace swaplab {

inline constexpr int kConfigSchemaVersion = 1;

struct SyntheticInput {
  SynthParams params;
  uint64_t seed = 0;
};

struct FileInput {
  std::filesystem::path households;
  std::filesystem::path geography;
};

struct MechanismSpec {
  std::string name;
  // Exactly one of these is meaningful, selected by |is_swap|.
  bool is_swap = true;
  std::string variant = "standard";
  SwapConfig swap;
  ToyDownConfig toydown;
};

// Metrics that run_pipeline() can emit for each mechanism x replicate.
inline const std::set<std::string>& known_metrics() {
  static const std::set<std::string> kMetrics = {
      "error_table", "block_table", "swap_log", "entropy",
      "tabulations", "rucc",        "variance", "er"};
  return kMetrics;
}

struct RunConfig {
  int spec_version = kConfigSchemaVersion;
  uint64_t base_seed = 0;
  int replicates = 1;
  std::filesystem::path output_dir = "swaplab-out";
  std::variant<SyntheticInput, FileInput> input;
  std::vector<MechanismSpec> mechanisms;
  std::set<std::string> metrics = {"error_table", "swap_log", "block_table"};
  Level error_level = Level::kCounty;
  std::optional<ElectionSpec> election;

  // Throws ConfigError for duplicate names, no mechanisms, replicates < 1 and
  // invalid mechanism parameters.
  void validate() const;
};

// Parses the YAML run configuration. Relative input paths are resolved
// against the directory containing the config file. Throws ConfigError with
// the offending line.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& yaml,
                           const std::filesystem::path& base_dir = ".");

// Accepts a run configuration or a file whose top level is the synthetic
// block itself.
SyntheticInput load_synthetic_config(const std::filesystem::path& path);

// Loads or generates the input microdata.
Microdata load_input(const RunConfig& config);

}  // namespace swaplab

#endif  // SWAPLAB_RUN_CONFIG_H_
