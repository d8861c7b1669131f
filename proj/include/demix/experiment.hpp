#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "demix/config.hpp"

namespace demix {

struct MetricRow {
  std::string run;
  std::uint64_t seed = 0;
  long step = 0;
  std::string metric;
  double value = 0.0;
};

/// Names a MetricRow may carry.
const std::vector<std::string>& metric_registry();
bool is_registered_metric(const std::string& name);

/// Header `run,seed,step,metric,value`; reals with 17 significant digits.
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
std::string format_metric_value(double value);

struct ExperimentOutcome {
  std::vector<MetricRow> rows;
  nlohmann::json summary;
};

/// Trains and evaluates every seed. Writes metrics.csv, summary.json and,
/// optionally, seed_<N>.dmx checkpoints into config.out unless `write_files` is false.
ExperimentOutcome run_experiment(const ExperimentConfig& config, bool write_files = true);

struct SeedDelta {
  std::uint64_t seed = 0;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // b - a
};

struct PairedReport {
  std::string metric;
  std::vector<SeedDelta> per_seed;  // ordered by seed
  double mean_delta = 0.0;
  int wins_a = 0;
  int wins_b = 0;
  int ties = 0;
};

/// Pairs per-seed headline values by seed key. Throws on mismatched seed sets.
PairedReport compare_runs(const nlohmann::json& summary_a, const nlohmann::json& summary_b);
nlohmann::json to_json(const PairedReport& report);

}  // namespace demix
