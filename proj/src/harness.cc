#include "swaplab/harness.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "swaplab/csv.h"
#include "swaplab/errors.h"
#include "swaplab/metrics.h"
#include "swaplab/swap_engine.h"

namespace swaplab {
namespace {

using Json = nlohmann::ordered_json;

// Races fitted by the per-cell ER report.
constexpr std::array<Race, 2> kErRaces = {Race::kWhite, Race::kBlack};

std::string rep_dir(int replicate) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "rep%03d", replicate);
  return buf;
}

std::vector<ErCsvRow> fit_all(std::span<const Precinct> precincts,
                              int replicate) {
  std::vector<ErCsvRow> rows;
  if (precincts.empty()) return rows;
  const int candidates = static_cast<int>(precincts.front().votes.size());
  for (Race race : kErRaces) {
    for (int c = 0; c < candidates; ++c) {
      for (bool weighted : {false, true}) {
        rows.push_back({ecological_regression(precincts, race, c, weighted),
                        replicate});
      }
    }
  }
  return rows;
}

// Everything that is computed once per run and read by every cell.
struct Context {
  const RunConfig& config;
  const Microdata& md;
  std::optional<SwapEngine> engine;
  std::optional<ToyDown> toydown;
  RegionTable original_blocks;
  std::optional<Election> election;
};

RegionTable protect(const Context& ctx, const MechanismSpec& m, uint64_t seed,
                    std::optional<SwapResult>* swap_out = nullptr) {
  if (m.is_swap) {
    SwapConfig cfg = m.swap;
    cfg.seed = seed;
    SwapResult result = ctx.engine->run(cfg);
    RegionTable blocks = race_table(result.swapped, Level::kBlock);
    if (swap_out) swap_out->emplace(std::move(result));
    return blocks;
  }
  ToyDownConfig cfg = m.toydown;
  cfg.seed = seed;
  return ctx.toydown->run(cfg);
}

struct CellOutput {
  CellResult result;
  std::optional<RegionTable> blocks;
  std::string summary_row;
  std::exception_ptr io_error;
};

void run_cell(const Context& ctx, const MechanismSpec& m, CellOutput& out) {
  const RunConfig& config = ctx.config;
  const GeoHierarchy& geo = ctx.md.geo();
  CellResult& cell = out.result;
  const std::string dir = m.name + "/" + rep_dir(cell.replicate) + "/";
  std::vector<std::pair<std::string, std::string>> files;
  auto emit = [&](const std::string& name, std::string contents) {
    files.emplace_back(dir + name, std::move(contents));
  };

  std::optional<SwapResult> swap;
  RegionTable blocks = protect(ctx, m, cell.seed, &swap);
  const auto& metrics = config.metrics;

  if (swap && metrics.count("swap_log")) {
    emit("swap_log.csv", swap_log_csv(swap->log, geo));
  }
  if (metrics.count("error_table")) {
    emit("error_table.csv",
         error_table_csv(error_table(
             rollup(ctx.original_blocks, geo, config.error_level),
             rollup(blocks, geo, config.error_level))));
  }
  if (metrics.count("block_table")) {
    emit("block_table.csv", block_table_csv(blocks));
  }
  if (swap && metrics.count("entropy")) {
    emit("entropy.csv",
         entropy_report_csv(entropy_decomposition(ctx.md, swap->log)));
  }
  if (swap && metrics.count("tabulations")) {
    SwapTabulations t = swap_tabulations(ctx.md, swap->log);
    emit("size_distribution.csv", size_distribution_csv(t));
    emit("target_race.csv", target_race_csv(t));
    emit("partner_matrix.csv", partner_matrix_csv(t));
  }
  if (metrics.count("rucc")) {
    RuccRatioTable table =
        rucc_ratio_table(rollup(ctx.original_blocks, geo, Level::kCounty),
                         rollup(blocks, geo, Level::kCounty), geo);
    emit("rucc_rows.csv", rucc_rows_csv(table));
    emit("rucc_groups.csv", rucc_groups_csv(table));
  }
  if (metrics.count("er")) {
    std::vector<Precinct> precincts = reaggregate(*ctx.election, blocks, geo);
    emit("er.csv", er_csv(fit_all(precincts, cell.replicate)));
  }

  out.summary_row =
      std::to_string(cell.replicate) + ',' + std::to_string(cell.seed) +
      ",ok," + format_fixed6(mean_abs_error(ctx.original_blocks, blocks)) +
      ',' + format_fixed6(mean_entropy(rollup(blocks, geo, Level::kTract))) +
      ',' + (swap ? std::to_string(swap->log.targets_count) : "") + ',' +
      (swap ? std::to_string(swap->log.skipped_targets) : "") + '\n';
  out.blocks = std::move(blocks);

  // Reports are only written once the whole cell has succeeded.
  for (auto& [path, contents] : files) {
    try {
      write_file_atomic(config.output_dir / path, contents);
    } catch (const IoError&) {
      out.io_error = std::current_exception();
      return;
    }
    cell.files.push_back(path);
  }
}

Json synth_json(const SyntheticInput& in) {
  const SynthParams& p = in.params;
  Json j;
  j["n_households"] = p.n_households;
  j["counties"] = p.counties;
  j["tracts_per_county"] = p.tracts_per_county;
  j["blocks_per_tract"] = p.blocks_per_tract;
  j["size_distribution"] = p.size_distribution;
  j["race_mixture"] = p.race_mixture;
  j["hispanic_rate"] = p.hispanic_rate;
  j["segregation"] = p.segregation;
  j["adult_rate"] = p.adult_rate;
  j["seed"] = in.seed;
  return j;
}

Json manifest_json(const RunConfig& config, const PipelineResult& result) {
  Json j;
  j["tool"] = "swaplab";
  j["spec_version"] = config.spec_version;
  j["seed_derivation"] =
      "splitmix64(splitmix64(base_seed ^ fnv1a64(mechanism_name)) + "
      "replicate)";
  j["base_seed"] = config.base_seed;
  j["replicates"] = config.replicates;
  if (const auto* s = std::get_if<SyntheticInput>(&config.input)) {
    j["input"]["synthetic"] = synth_json(*s);
  } else {
    const auto& f = std::get<FileInput>(config.input);
    j["input"]["households"] = f.households.generic_string();
    j["input"]["geography"] = f.geography.generic_string();
  }
  Json mechs = Json::array();
  for (const auto& m : config.mechanisms) {
    Json mj;
    mj["name"] = m.name;
    if (m.is_swap) {
      mj["type"] = "swap";
      mj["variant"] = m.variant;
      mj["swap_rate"] = m.swap.swap_rate;
      mj["k_nearest"] = m.swap.k_nearest;
      mj["tier_probs"] = m.swap.tier_probs;
    } else {
      mj["type"] = "toydown";
      mj["epsilon"] = m.toydown.epsilon_total;
      mj["level_weights"] = m.toydown.level_weights;
    }
    mechs.push_back(mj);
  }
  j["mechanisms"] = mechs;
  j["metrics"] = Json(std::vector<std::string>(config.metrics.begin(),
                                               config.metrics.end()));
  j["error_level"] = std::string(level_name(config.error_level));
  if (config.election) {
    const ElectionSpec& e = *config.election;
    j["election"]["tracts_per_precinct"] = e.tracts_per_precinct;
    j["election"]["support"] = e.support;
    j["election"]["turnout"] = e.turnout;
    j["election"]["seed"] = e.seed;
  }
  Json cells = Json::array();
  for (const auto& c : result.cells) {
    Json cj;
    cj["mechanism"] = c.mechanism;
    cj["replicate"] = c.replicate;
    cj["seed"] = c.seed;
    cj["status"] = c.ok ? "ok" : "error";
    if (!c.ok) cj["error"] = c.error;
    cj["files"] = c.files;
    cells.push_back(cj);
  }
  j["cells"] = cells;
  j["failed_mechanisms"] = result.failed_mechanisms;
  j["files"] = result.files;
  return j;
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

Race race_or_throw(std::string_view text, const std::string& name) {
  auto race = parse_race(text);
  if (!race) {
    throw RegistryError("unknown race '" + std::string(text) +
                        "' in statistic '" + name + "'");
  }
  return *race;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  size_t start = 0;
  for (;;) {
    size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return parts;
    start = pos + 1;
  }
}

const MechanismSpec& find_mechanism(const RunConfig& config,
                                    const std::string& name) {
  if (name.empty()) return config.mechanisms.front();
  for (const auto& m : config.mechanisms) {
    if (m.name == name) return m;
  }
  throw ConfigError("no mechanism named '" + name + "'");
}

}  // namespace

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  const size_t workers =
      std::min(n, static_cast<size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

Election build_election(const Microdata& md, const ElectionSpec& spec) {
  return generate_election(md, group_tracts(md.geo(), spec.tracts_per_precinct),
                           spec.support, spec.turnout, spec.seed);
}

PipelineResult run_pipeline(const RunConfig& config, int jobs) {
  config.validate();
  const Microdata md = load_input(config);

  Context ctx{config, md, std::nullopt, std::nullopt,
              race_table(md, Level::kBlock), std::nullopt};
  for (const auto& m : config.mechanisms) {
    if (m.is_swap && !ctx.engine) ctx.engine.emplace(md);
    if (!m.is_swap && !ctx.toydown) ctx.toydown.emplace(md);
  }
  if (config.election) ctx.election = build_election(md, *config.election);

  PipelineResult result;
  auto write = [&](const std::string& rel, const std::string& contents) {
    write_file_atomic(config.output_dir / rel, contents);
    result.files.push_back(rel);
  };

  if (config.metrics.count("block_table")) {
    write("original/block_table.csv", block_table_csv(ctx.original_blocks));
  }
  if (config.metrics.count("er")) {
    write("original/precincts.csv", precinct_csv(ctx.election->precincts));
    write("original/er.csv", er_csv(fit_all(ctx.election->precincts, 0)));
  }

  const int reps = config.replicates;
  std::vector<CellOutput> outputs(config.mechanisms.size() * reps);
  for (size_t mi = 0; mi < config.mechanisms.size(); ++mi) {
    for (int r = 0; r < reps; ++r) {
      CellResult& c = outputs[mi * reps + r].result;
      c.mechanism = config.mechanisms[mi].name;
      c.replicate = r;
      c.seed = cell_seed(config, c.mechanism, r);
    }
  }

  parallel_for(outputs.size(), jobs, [&](size_t i) {
    CellOutput& out = outputs[i];
    try {
      run_cell(ctx, config.mechanisms[i / reps], out);
    } catch (const std::exception& e) {
      out.result.ok = false;
      out.result.error = e.what();
      out.result.files.clear();
      out.blocks.reset();
    }
  });
  for (const auto& out : outputs) {
    if (out.io_error) std::rethrow_exception(out.io_error);
  }

  for (size_t mi = 0; mi < config.mechanisms.size(); ++mi) {
    const MechanismSpec& m = config.mechanisms[mi];
    std::string summary =
        "replicate,seed,status,mean_abs_error,mean_tract_entropy,"
        "targets_count,skipped_targets\n";
    bool failed = false;
    for (int r = 0; r < reps; ++r) {
      const CellOutput& out = outputs[mi * reps + r];
      if (out.result.ok) {
        summary += out.summary_row;
      } else {
        failed = true;
        summary += std::to_string(r) + ',' + std::to_string(out.result.seed) +
                   ",error,,,,\n";
      }
    }
    if (failed) result.failed_mechanisms.push_back(m.name);
    write(m.name + "/summary.csv", summary);

    if (config.metrics.count("variance")) {
      std::string v = "pair,replicate_a,replicate_b,variance_estimate\n";
      for (int a = 0; a + 1 < reps; a += 2) {
        const auto& ta = outputs[mi * reps + a].blocks;
        const auto& tb = outputs[mi * reps + a + 1].blocks;
        if (!ta || !tb) continue;
        v += std::to_string(a / 2) + ',' + std::to_string(a) + ',' +
             std::to_string(a + 1) + ',' +
             format_fixed6(variance_estimate(*ta, *tb)) + '\n';
      }
      write(m.name + "/variance.csv", v);
    }
  }

  for (auto& out : outputs) {
    for (const auto& f : out.result.files) result.files.push_back(f);
    result.cells.push_back(std::move(out.result));
  }
  result.files.push_back("manifest.json");
  std::sort(result.files.begin(), result.files.end());
  write_file_atomic(config.output_dir / "manifest.json",
                    manifest_json(config, result).dump(2) + "\n");
  return result;
}

const StatisticRegistry& StatisticRegistry::builtin() {
  static const StatisticRegistry kRegistry;
  return kRegistry;
}

std::vector<std::string> StatisticRegistry::available() const {
  return {"state_count:<race>", "county_count:<county_id>:<race>",
          "tract_entropy_mean", "er_slope:<race>:<candidate>",
          "er_slope_weighted:<race>:<candidate>"};
}

StatisticFn StatisticRegistry::resolve(const std::string& name) const {
  const std::vector<std::string> parts = split(name, ':');
  const std::string& kind = parts.front();
  if (kind == "state_count" && parts.size() == 2) {
    const int r = race_index(race_or_throw(parts[1], name));
    return [r](const RegionTable& blocks, const StatisticContext&) {
      int64_t total = 0;
      for (const auto& row : blocks.counts) total += row[r];
      return static_cast<double>(total);
    };
  }
  if (kind == "county_count" && parts.size() == 3) {
    const int r = race_index(race_or_throw(parts[2], name));
    const std::string county = parts[1];
    return [r, county, name](const RegionTable& blocks,
                             const StatisticContext& ctx) {
      auto c = ctx.geo->find_county(county);
      if (!c) {
        throw RegistryError("statistic '" + name + "': no county '" + county +
                            "'");
      }
      int64_t total = 0;
      for (size_t b = 0; b < blocks.counts.size(); ++b) {
        if (ctx.geo->county_of_block(static_cast<int32_t>(b)) == *c) {
          total += blocks.counts[b][r];
        }
      }
      return static_cast<double>(total);
    };
  }
  if (kind == "tract_entropy_mean" && parts.size() == 1) {
    return [](const RegionTable& blocks, const StatisticContext& ctx) {
      return mean_entropy(rollup(blocks, *ctx.geo, Level::kTract));
    };
  }
  if ((kind == "er_slope" || kind == "er_slope_weighted") &&
      parts.size() == 3) {
    const Race race = race_or_throw(parts[1], name);
    int candidate = 0;
    try {
      size_t used = 0;
      candidate = std::stoi(parts[2], &used);
      if (used != parts[2].size() || candidate < 1) throw std::exception();
    } catch (const std::exception&) {
      throw RegistryError("statistic '" + name +
                          "': candidate must be a positive integer");
    }
    const bool weighted = kind == "er_slope_weighted";
    return [race, candidate, weighted, name](const RegionTable& blocks,
                                             const StatisticContext& ctx) {
      if (!ctx.election) {
        throw ConfigError("statistic '" + name +
                          "' needs an 'election' section");
      }
      std::vector<Precinct> precincts =
          reaggregate(*ctx.election, blocks, *ctx.geo);
      if (!precincts.empty() &&
          static_cast<size_t>(candidate) > precincts.front().votes.size()) {
        throw RegistryError("statistic '" + name + "': no candidate " +
                            std::to_string(candidate));
      }
      return ecological_regression(precincts, race, candidate - 1, weighted)
          .slope;
    };
  }
  std::string list;
  for (const auto& a : available()) list += "\n  " + a;
  throw RegistryError("unknown statistic '" + name + "'; available:" + list);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InsufficientDataError("quantile of no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const size_t lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) *
                          (values[lo + 1] - values[lo]);
}

DeltaReport estimate_delta(const RunConfig& config, const Microdata& md,
                           const std::string& statistic, int replicates,
                           const std::string& mechanism, int jobs) {
  if (replicates < 2) throw ConfigError("delta needs replicates >= 2");
  StatisticFn fn = StatisticRegistry::builtin().resolve(statistic);
  const MechanismSpec& m = find_mechanism(config, mechanism);

  Context ctx{config, md, std::nullopt, std::nullopt,
              race_table(md, Level::kBlock), std::nullopt};
  if (m.is_swap) {
    ctx.engine.emplace(md);
  } else {
    ctx.toydown.emplace(md);
  }
  if (config.election) ctx.election = build_election(md, *config.election);
  const StatisticContext sctx{&md.geo(),
                              ctx.election ? &*ctx.election : nullptr};

  DeltaReport report;
  report.statistic = statistic;
  report.mechanism = m.name;
  report.original = fn(ctx.original_blocks, sctx);
  report.seeds.resize(replicates);
  report.deltas.resize(replicates);
  parallel_for(replicates, jobs, [&](size_t i) {
    report.seeds[i] = cell_seed(config, m.name, static_cast<int>(i));
    RegionTable blocks = protect(ctx, m, report.seeds[i]);
    report.deltas[i] = fn(blocks, sctx) - report.original;
  });

  double sum = 0.0;
  for (double d : report.deltas) sum += d;
  report.mean = sum / static_cast<double>(replicates);
  report.variance = sample_variance(report.deltas);
  auto [lo, hi] = std::minmax_element(report.deltas.begin(),
                                      report.deltas.end());
  report.min = *lo;
  report.max = *hi;
  report.q05 = quantile(report.deltas, 0.05);
  report.q50 = quantile(report.deltas, 0.50);
  report.q95 = quantile(report.deltas, 0.95);
  return report;
}

DeltaReport estimate_delta(const RunConfig& config,
                           const std::string& statistic, int replicates,
                           const std::string& mechanism, int jobs) {
  config.validate();
  // Fail on a bad statistic before paying for data generation.
  StatisticRegistry::builtin().resolve(statistic);
  return estimate_delta(config, load_input(config), statistic, replicates,
                        mechanism, jobs);
}

std::string delta_csv(const DeltaReport& report) {
  std::string out = "replicate,seed,delta\n";
  for (size_t i = 0; i < report.deltas.size(); ++i) {
    out += std::to_string(i) + ',' + std::to_string(report.seeds[i]) + ',' +
           format_fixed6(report.deltas[i]) + '\n';
  }
  return out;
}

std::string delta_summary_csv(const DeltaReport& report) {
  std::string out =
      "statistic,mechanism,replicates,original,mean,variance,min,q05,q50,q95,"
      "max,correction\n";
  out += report.statistic + ',' + report.mechanism + ',' +
         std::to_string(report.deltas.size());
  for (double v : {report.original, report.mean, report.variance, report.min,
                   report.q05, report.q50, report.q95, report.max,
                   -report.mean}) {
    out += ',' + format_fixed6(v);
  }
  return out + '\n';
}

VarianceSummary summarize(std::vector<double> estimates) {
  if (estimates.empty()) throw InsufficientDataError("no variance estimates");
  VarianceSummary s;
  s.min = *std::min_element(estimates.begin(), estimates.end());
  s.max = *std::max_element(estimates.begin(), estimates.end());
  s.median = quantile(estimates, 0.5);
  s.estimates = std::move(estimates);
  return s;
}

SweepReport variance_sweep(const Microdata& md, uint64_t base_seed,
                           const SweepOptions& options, int jobs) {
  if (options.runs_per_point < 1) {
    throw ConfigError("runs_per_point must be >= 1");
  }
  for (double r : options.rates) {
    if (!(r > 0.0 && r < 1.0)) {
      throw ConfigError("swap rate " + format_double(r) +
                        " is outside (0, 1)");
    }
  }
  options.toydown_ref.validate();
  const size_t runs = static_cast<size_t>(options.runs_per_point);
  const size_t points = options.rates.size();
  const SwapEngine engine(md);
  const ToyDown toydown(md);

  auto pair_seeds = [&](const std::string& stream, size_t j) {
    uint64_t a = derive_seed(base_seed, stream, 2 * j);
    uint64_t b =
        options.identical_pairs ? a : derive_seed(base_seed, stream, 2 * j + 1);
    return std::pair{a, b};
  };

  // Tasks [0, points * runs) are swap runs; the last |runs| are ToyDown.
  std::vector<double> estimates((points + 1) * runs);
  parallel_for(estimates.size(), jobs, [&](size_t t) {
    const size_t p = t / runs;
    const size_t j = t % runs;
    if (p < points) {
      const double rate = options.rates[p];
      auto [a, b] = pair_seeds("sweep:" + format_double(rate), j);
      SwapConfig cfg = options.swap;
      cfg.swap_rate = rate;
      cfg.seed = a;
      RegionTable ta = race_table(engine.run(cfg).swapped, Level::kBlock);
      cfg.seed = b;
      RegionTable tb = race_table(engine.run(cfg).swapped, Level::kBlock);
      estimates[t] = variance_estimate(ta, tb);
    } else {
      auto [a, b] = pair_seeds("sweep:toydown", j);
      ToyDownConfig cfg = options.toydown_ref;
      cfg.seed = a;
      RegionTable ta = toydown.run(cfg);
      cfg.seed = b;
      estimates[t] = variance_estimate(ta, toydown.run(cfg));
    }
  });

  SweepReport report;
  for (size_t p = 0; p < points; ++p) {
    report.points.push_back(
        {options.rates[p],
         summarize(std::vector<double>(estimates.begin() + p * runs,
                                       estimates.begin() + (p + 1) * runs))});
  }
  report.toydown_epsilon = options.toydown_ref.epsilon_total;
  report.toydown = summarize(
      std::vector<double>(estimates.begin() + points * runs, estimates.end()));
  return report;
}

std::string sweep_csv(const SweepReport& report) {
  std::string out = "series,rate,run,variance_estimate\n";
  auto rows = [&](const char* series, double rate, const VarianceSummary& s) {
    for (size_t j = 0; j < s.estimates.size(); ++j) {
      out += std::string(series) + ',' + format_double(rate) + ',' +
             std::to_string(j) + ',' + format_fixed6(s.estimates[j]) + '\n';
    }
  };
  for (const auto& p : report.points) rows("swap", p.rate, p.variance);
  rows("toydown", report.toydown_epsilon, report.toydown);
  return out;
}

std::string sweep_summary_csv(const SweepReport& report) {
  std::string out = "series,rate,min,median,max\n";
  auto row = [&](const char* series, double rate, const VarianceSummary& s) {
    out += std::string(series) + ',' + format_double(rate) + ',' +
           format_fixed6(s.min) + ',' + format_fixed6(s.median) + ',' +
           format_fixed6(s.max) + '\n';
  };
  for (const auto& p : report.points) row("swap", p.rate, p.variance);
  row("toydown", report.toydown_epsilon, report.toydown);
  return out;
}

}  // namespace swaplab
