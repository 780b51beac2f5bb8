#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "mvp2p/harness.hpp"
#include "mvp2p/metrics.hpp"
#include "mvp2p/sim_engine.hpp"

using namespace mvp2p;

namespace {

int cmd_run(const std::string& config_path, std::uint64_t seed, bool seed_set,
            const std::string& out_csv) {
  ScenarioConfig cfg = ScenarioConfig::from_file(config_path);
  if (seed_set) cfg.seed = seed;
  Simulation sim(cfg);
  Metrics m = sim.run();

  std::printf("strategy        %s\n", to_string(cfg.strategy).c_str());
  std::printf("seed            %llu\n", static_cast<unsigned long long>(cfg.seed));
  std::printf("peers           %d\n", cfg.peer_count);
  std::printf("window          [%.1f, %.1f] s\n", m.window_start_s, m.window_end_s);
  std::printf("server_bps      %.0f\n", m.server_bps());
  std::printf("total_bps       %.0f\n", m.total_bps());
  std::printf("ps              %.4f\n", m.total_bits > 0 ? compute_ps(m) : 0.0);
  std::printf("optimal_ps      %.4f\n", m.optimal_share);
  std::printf("missed          %lld\n", static_cast<long long>(m.missed_deadlines));
  std::printf("startups        %zu\n", m.startup_times.size());
  std::printf("switches        %zu\n", m.switch_times.size());
  if (!out_csv.empty()) {
    std::vector<std::string> names;
    for (const LayerId& l : sim.graph().layers()) names.push_back(to_string(l));
    write_metrics_csv(m, names, out_csv);
    std::printf("metrics csv     %s\n", out_csv.c_str());
  }
  return 0;
}

int cmd_sweep(const std::string& spec_path, const std::string& out_csv) {
  SweepSpec spec = SweepSpec::from_file(spec_path);
  FigureTable table = run_sweep(spec);
  emit_csv(table, out_csv);
  std::printf("wrote %s (%zu rows)\n", out_csv.c_str(), table.rows.size());
  return 0;
}

int cmd_optimal(const std::string& pop_path) {
  PopulationSpec pop = PopulationSpec::from_file(pop_path);
  double share = theoretical_optimal_share(*pop.graph, pop.subsets);
  std::printf("optimal_ps %.6f\n", share);
  return 0;
}

int cmd_allocate(const std::string& pop_path, const std::string& out_prefix) {
  PopulationSpec pop = PopulationSpec::from_file(pop_path);
  write_allocation_csv(pop, out_prefix + "_flows.csv", out_prefix + "_quotas.csv");
  std::printf("wrote %s_flows.csv and %s_quotas.csv\n", out_prefix.c_str(), out_prefix.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layer-aware P2P live streaming simulator"};
  app.require_subcommand(1);

  std::string config_path, spec_path, pop_path;
  std::string out_csv, out_prefix = "allocation";
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "run one scenario and print a summary");
  run->add_option("--config", config_path, "scenario config (JSON)")->required();
  auto* seed_opt = run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_csv, "write per-second metrics CSV");

  auto* sweep = app.add_subcommand("sweep", "run a parameter sweep");
  sweep->add_option("--spec", spec_path, "sweep spec (JSON)")->required();
  sweep->add_option("--out", out_csv, "output CSV path")->default_val("sweep.csv");

  auto* optimal = app.add_subcommand("optimal", "print the max-flow optimal server share");
  optimal->add_option("--population", pop_path, "population description (JSON)")->required();

  auto* allocate = app.add_subcommand("allocate", "dump the flow table and server quotas");
  allocate->add_option("--population", pop_path, "population description (JSON)")->required();
  allocate->add_option("--out", out_prefix, "output file prefix");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed, seed_opt->count() > 0, out_csv);
    if (sweep->parsed()) return cmd_sweep(spec_path, out_csv);
    if (optimal->parsed()) return cmd_optimal(pop_path);
    if (allocate->parsed()) return cmd_allocate(pop_path, out_prefix);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
