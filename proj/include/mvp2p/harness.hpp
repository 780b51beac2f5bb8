#pragma once

#include <string>
#include <vector>

#include "mvp2p/flow_model.hpp"
#include "mvp2p/metrics.hpp"
#include "mvp2p/scenario.hpp"

namespace mvp2p {

/// A parameter sweep: one base scenario, one swept config field, a value
/// list, and the strategies and seeds to run per point.
struct SweepSpec {
  ScenarioConfig base;
  std::string parameter;          // recognized ScenarioConfig field name
  std::vector<double> values;
  std::vector<Strategy> strategies{Strategy::Mvp2p, Strategy::Srt};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  static SweepSpec from_file(const std::string& path);
  static SweepSpec from_json_text(const std::string& text, const std::string& base_dir = ".");
  void validate() const;
};

/// Applies a swept value to a config field by name.
ScenarioConfig apply_parameter(const ScenarioConfig& base, const std::string& parameter,
                               double value);

struct FigureRow {
  double value = 0;
  Strategy strategy = Strategy::Mvp2p;
  double mean_ps = 0;
  double mean_server_bps = 0;
  double std_ps = 0;
  double mean_optimal_ps = 0;
  int seeds = 0;
};

struct FigureTable {
  std::string parameter;
  std::vector<FigureRow> rows;  // ordered by (value asc, strategy name asc)
};

/// Runs every (value, strategy, seed) combination and aggregates.
/// `keep_runs`, when non-null, receives every individual run's metrics keyed
/// by (value, strategy, seed) in execution order.
struct RunRecord {
  double value;
  Strategy strategy;
  std::uint64_t seed;
  Metrics metrics;
};
FigureTable run_sweep(const SweepSpec& spec, std::vector<RunRecord>* keep_runs = nullptr);

void emit_csv(const FigureTable& table, const std::string& path);

/// A peer population for one-shot allocation (no simulation): either
/// explicit subsets or a list of individual peers.
struct PopulationSpec {
  std::shared_ptr<const LayerGraph> graph;
  std::vector<PeerSubsetStats> subsets;

  static PopulationSpec from_file(const std::string& path);
  static PopulationSpec from_json_text(const std::string& text, const std::string& base_dir = ".");
};

/// Writes the solved flow table (v->s, s->r, r->t rows with capacity and
/// flow) for a population.
void write_allocation_csv(const PopulationSpec& pop, const std::string& flows_path,
                          const std::string& quotas_path);

}  // namespace mvp2p
