#include "swaplab/run_config.h"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "swaplab/errors.h"

namespace swaplab {
namespace {

// Mechanism names become directory names.
bool valid_name(const std::string& name) {
  if (name.empty() || name == "." || name == ".." || name == "original") {
    return false;
  }
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '-' || c == '.';
  });
}

int line_of(const YAML::Node& node) {
  return node.Mark().is_null() ? 0 : node.Mark().line + 1;
}

[[noreturn]] void fail(const YAML::Node& node, const std::string& what) {
  throw ConfigError(what, line_of(node));
}

void expect_map(const YAML::Node& node, const std::string& what) {
  if (!node.IsMap()) fail(node, what + " must be a mapping");
}

// Rejects keys outside |allowed| so that typos do not silently fall back to
// defaults.
void check_keys(const YAML::Node& node, const std::set<std::string>& allowed,
                const std::string& section) {
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail(kv.first, "unknown key '" + key + "' in " + section +
                         " (expected one of: " + list + ")");
    }
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) fail(node, "'" + key + "' must be a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(node, "'" + key + "' has an invalid value '" + node.Scalar() + "'");
  }
}

std::vector<double> number_list(const YAML::Node& node,
                                const std::string& key) {
  if (!node.IsSequence()) fail(node, "'" + key + "' must be a list");
  std::vector<double> out;
  for (const auto& item : node) out.push_back(scalar<double>(item, key));
  return out;
}

template <size_t N>
std::array<double, N> fixed_list(const YAML::Node& node,
                                 const std::string& key) {
  std::vector<double> v = number_list(node, key);
  if (v.size() != N) {
    fail(node, "'" + key + "' must have " + std::to_string(N) + " entries");
  }
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

// Runs |validate| and re-anchors its ConfigError at |node|.
template <typename F>
void validate_at(const YAML::Node& node, F&& validate) {
  try {
    validate();
  } catch (const ConfigError& e) {
    fail(node, e.what());
  }
}

SyntheticInput parse_synthetic(const YAML::Node& node) {
  expect_map(node, "synthetic");
  check_keys(node,
             {"n_households", "counties", "tracts_per_county",
              "blocks_per_tract", "size_distribution", "race_mixture",
              "hispanic_rate", "segregation", "adult_rate", "seed"},
             "synthetic");
  SyntheticInput in;
  in.params = default_synth_params();
  SynthParams& p = in.params;
  if (node["n_households"])
    p.n_households = scalar<int64_t>(node["n_households"], "n_households");
  if (node["counties"]) p.counties = scalar<int>(node["counties"], "counties");
  if (node["tracts_per_county"])
    p.tracts_per_county =
        scalar<int>(node["tracts_per_county"], "tracts_per_county");
  if (node["blocks_per_tract"])
    p.blocks_per_tract =
        scalar<int>(node["blocks_per_tract"], "blocks_per_tract");
  if (node["size_distribution"])
    p.size_distribution =
        number_list(node["size_distribution"], "size_distribution");
  if (node["race_mixture"])
    p.race_mixture = fixed_list<kNumRaces>(node["race_mixture"], "race_mixture");
  if (node["hispanic_rate"])
    p.hispanic_rate = scalar<double>(node["hispanic_rate"], "hispanic_rate");
  if (node["segregation"])
    p.segregation = scalar<double>(node["segregation"], "segregation");
  if (node["adult_rate"])
    p.adult_rate = scalar<double>(node["adult_rate"], "adult_rate");
  if (node["seed"]) in.seed = scalar<uint64_t>(node["seed"], "seed");
  validate_at(node, [&] { p.validate(); });
  return in;
}

MechanismSpec parse_mechanism(const YAML::Node& node) {
  expect_map(node, "mechanism");
  if (!node["name"]) fail(node, "mechanism is missing 'name'");
  if (!node["type"]) fail(node, "mechanism is missing 'type'");
  MechanismSpec m;
  m.name = scalar<std::string>(node["name"], "name");
  if (!valid_name(m.name)) {
    fail(node["name"], "invalid mechanism name '" + m.name +
                           "' (letters, digits, '_', '-', '.'; not 'original')");
  }
  const std::string type = scalar<std::string>(node["type"], "type");
  if (type == "swap") {
    check_keys(node,
               {"name", "type", "variant", "swap_rate", "k_nearest",
                "tier_probs"},
               "swap mechanism '" + m.name + "'");
    m.is_swap = true;
    if (node["variant"]) {
      m.variant = scalar<std::string>(node["variant"], "variant");
    }
    validate_at(node["variant"] ? node["variant"] : node,
                [&] { m.swap = swap_variant(m.variant); });
    if (node["swap_rate"])
      m.swap.swap_rate = scalar<double>(node["swap_rate"], "swap_rate");
    if (node["k_nearest"])
      m.swap.k_nearest = scalar<int>(node["k_nearest"], "k_nearest");
    if (node["tier_probs"])
      m.swap.tier_probs = fixed_list<4>(node["tier_probs"], "tier_probs");
    validate_at(node, [&] { m.swap.validate(); });
  } else if (type == "toydown") {
    check_keys(node, {"name", "type", "epsilon", "level_weights"},
               "toydown mechanism '" + m.name + "'");
    m.is_swap = false;
    if (node["epsilon"])
      m.toydown.epsilon_total = scalar<double>(node["epsilon"], "epsilon");
    if (node["level_weights"])
      m.toydown.level_weights =
          fixed_list<4>(node["level_weights"], "level_weights");
    validate_at(node, [&] { m.toydown.validate(); });
  } else {
    fail(node["type"],
         "unknown mechanism type '" + type + "' (expected swap or toydown)");
  }
  return m;
}

ElectionSpec parse_election(const YAML::Node& node) {
  expect_map(node, "election");
  check_keys(node,
             {"tracts_per_precinct", "polarization", "support", "turnout",
              "seed"},
             "election");
  if (node["polarization"] && node["support"]) {
    fail(node, "election takes either 'polarization' or 'support', not both");
  }
  ElectionSpec e = polarized_election(
      node["polarization"]
          ? scalar<double>(node["polarization"], "polarization")
          : 0.9);
  if (node["support"]) {
    const YAML::Node& s = node["support"];
    if (!s.IsSequence() || s.size() != kNumRaces) {
      fail(s, "'support' must list one row per race (" +
                  std::to_string(kNumRaces) + ")");
    }
    e.support.clear();
    for (const auto& row : s) e.support.push_back(number_list(row, "support"));
  }
  if (node["tracts_per_precinct"])
    e.tracts_per_precinct =
        scalar<int>(node["tracts_per_precinct"], "tracts_per_precinct");
  if (node["turnout"]) e.turnout = scalar<double>(node["turnout"], "turnout");
  if (node["seed"]) e.seed = scalar<uint64_t>(node["seed"], "seed");

  if (e.tracts_per_precinct < 1) fail(node, "tracts_per_precinct must be >= 1");
  if (!(e.turnout > 0.0 && e.turnout <= 1.0)) {
    fail(node, "turnout must be in (0, 1]");
  }
  const size_t candidates = e.support.front().size();
  if (candidates < 2) fail(node, "election needs at least two candidates");
  for (const auto& row : e.support) {
    if (row.size() != candidates) {
      fail(node, "every support row needs the same number of candidates");
    }
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) fail(node, "support probabilities must be >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail(node, "support rows must sum to 1");
  }
  return e;
}

RunConfig parse_root(const YAML::Node& root,
                     const std::filesystem::path& base_dir) {
  if (!root.IsMap()) fail(root, "run configuration must be a mapping");
  check_keys(root,
             {"spec_version", "base_seed", "replicates", "output_dir", "input",
              "mechanisms", "metrics", "error_level", "election"},
             "run configuration");
  RunConfig cfg;
  if (!root["spec_version"]) fail(root, "missing required key 'spec_version'");
  cfg.spec_version = scalar<int>(root["spec_version"], "spec_version");
  if (cfg.spec_version != kConfigSchemaVersion) {
    fail(root["spec_version"], "unsupported spec_version " +
                                   std::to_string(cfg.spec_version) +
                                   " (this build reads " +
                                   std::to_string(kConfigSchemaVersion) + ")");
  }
  if (root["base_seed"])
    cfg.base_seed = scalar<uint64_t>(root["base_seed"], "base_seed");
  if (root["replicates"]) {
    cfg.replicates = scalar<int>(root["replicates"], "replicates");
    if (cfg.replicates < 1) fail(root["replicates"], "replicates must be >= 1");
  }
  if (root["output_dir"])
    cfg.output_dir = scalar<std::string>(root["output_dir"], "output_dir");

  if (!root["input"]) fail(root, "missing required section 'input'");
  const YAML::Node& input = root["input"];
  expect_map(input, "input");
  check_keys(input, {"synthetic", "households", "geography"}, "input");
  if (input["synthetic"]) {
    if (input["households"] || input["geography"]) {
      fail(input, "input takes either 'synthetic' or file paths, not both");
    }
    cfg.input = parse_synthetic(input["synthetic"]);
  } else {
    if (!input["households"] || !input["geography"]) {
      fail(input, "input needs 'synthetic' or both 'households' and "
                  "'geography'");
    }
    FileInput f;
    f.households = scalar<std::string>(input["households"], "households");
    f.geography = scalar<std::string>(input["geography"], "geography");
    if (f.households.is_relative()) f.households = base_dir / f.households;
    if (f.geography.is_relative()) f.geography = base_dir / f.geography;
    cfg.input = f;
  }

  if (!root["mechanisms"]) fail(root, "missing required section 'mechanisms'");
  const YAML::Node& mechs = root["mechanisms"];
  if (!mechs.IsSequence() || mechs.size() == 0) {
    fail(mechs, "'mechanisms' must be a non-empty list");
  }
  std::set<std::string> names;
  for (const auto& m : mechs) {
    cfg.mechanisms.push_back(parse_mechanism(m));
    if (!names.insert(cfg.mechanisms.back().name).second) {
      fail(m, "duplicate mechanism name '" + cfg.mechanisms.back().name + "'");
    }
  }

  if (root["metrics"]) {
    const YAML::Node& metrics = root["metrics"];
    if (!metrics.IsSequence()) fail(metrics, "'metrics' must be a list");
    cfg.metrics.clear();
    for (const auto& item : metrics) {
      std::string name = scalar<std::string>(item, "metrics");
      if (!known_metrics().count(name)) {
        fail(item, "unknown metric '" + name + "'");
      }
      cfg.metrics.insert(name);
    }
  }
  if (root["error_level"]) {
    auto level =
        parse_level(scalar<std::string>(root["error_level"], "error_level"));
    if (!level) fail(root["error_level"], "unknown error_level");
    cfg.error_level = *level;
  }
  if (root["election"]) cfg.election = parse_election(root["election"]);
  if (cfg.metrics.count("er") && !cfg.election) {
    fail(root["metrics"], "metric 'er' needs an 'election' section");
  }
  if (cfg.metrics.count("variance") && cfg.replicates < 2) {
    fail(root["metrics"], "metric 'variance' needs replicates >= 2");
  }
  return cfg;
}

YAML::Node load_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void RunConfig::validate() const {
  if (spec_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported spec_version");
  }
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (mechanisms.empty()) throw ConfigError("no mechanisms configured");
  std::set<std::string> names;
  for (const auto& m : mechanisms) {
    if (!valid_name(m.name)) {
      throw ConfigError("invalid mechanism name '" + m.name + "'");
    }
    if (!names.insert(m.name).second) {
      throw ConfigError("duplicate mechanism name '" + m.name + "'");
    }
    if (m.is_swap) {
      m.swap.validate();
    } else {
      m.toydown.validate();
    }
  }
  for (const auto& metric : metrics) {
    if (!known_metrics().count(metric)) {
      throw ConfigError("unknown metric '" + metric + "'");
    }
  }
  if (metrics.count("er") && !election) {
    throw ConfigError("metric 'er' needs an election");
  }
  if (metrics.count("variance") && replicates < 2) {
    throw ConfigError("metric 'variance' needs replicates >= 2");
  }
  if (const auto* s = std::get_if<SyntheticInput>(&input)) s->params.validate();
}

RunConfig parse_run_config(const std::string& yaml,
                           const std::filesystem::path& base_dir) {
  return parse_root(load_yaml(yaml), base_dir);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text(path), path.parent_path());
}

SyntheticInput load_synthetic_config(const std::filesystem::path& path) {
  const YAML::Node root = load_yaml(read_text(path));
  if (!root.IsMap()) fail(root, "synthetic configuration must be a mapping");
  if (root["input"] && root["input"]["synthetic"]) {
    return parse_synthetic(root["input"]["synthetic"]);
  }
  if (root["synthetic"]) return parse_synthetic(root["synthetic"]);
  return parse_synthetic(root);
}

Microdata load_input(const RunConfig& config) {
  if (const auto* s = std::get_if<SyntheticInput>(&config.input)) {
    return generate_synthetic(s->params, s->seed);
  }
  const auto& f = std::get<FileInput>(config.input);
  return load_microdata(f.households, f.geography);
}

}  // namespace swaplab
