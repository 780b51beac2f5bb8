#include "mvp2p/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mvp2p/sim_engine.hpp"

namespace mvp2p {

using nlohmann::json;

SweepSpec SweepSpec::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sweep spec " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), std::filesystem::path(path).parent_path().string());
}

SweepSpec SweepSpec::from_json_text(const std::string& text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep spec is not valid JSON: ") + e.what());
  }
  SweepSpec s;
  try {
    if (doc.contains("base_config")) {
      std::filesystem::path p = doc.at("base_config").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
      s.base = ScenarioConfig::from_file(p.string());
    } else {
      s.base = ScenarioConfig::from_json_text(doc.at("base").dump(), base_dir);
    }
    s.parameter = doc.at("parameter").get<std::string>();
    for (const auto& v : doc.at("values")) s.values.push_back(v.get<double>());
    if (doc.contains("strategies")) {
      s.strategies.clear();
      for (const auto& v : doc.at("strategies")) s.strategies.push_back(parse_strategy(v));
    }
    if (doc.contains("seeds")) {
      s.seeds.clear();
      for (const auto& v : doc.at("seeds")) s.seeds.push_back(v.get<std::uint64_t>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad sweep spec: ") + e.what());
  }
  s.validate();
  return s;
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep has no values");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (strategies.empty()) throw ConfigError("sweep needs at least one strategy");
  apply_parameter(base, parameter, values.front());  // throws on unknown field
}

ScenarioConfig apply_parameter(const ScenarioConfig& base, const std::string& parameter,
                               double value) {
  ScenarioConfig c = base;
  if (parameter == "outbound_ratio") {
    c.outbound_ratio = value;
  } else if (parameter == "peer_count") {
    c.peer_count = static_cast<int>(value);
  } else if (parameter == "switch_rate_per_min") {
    c.switch_rate_per_min = value;
  } else if (parameter == "recalc_interval_s") {
    c.recalc_interval_s = value;
    c.recalc_auto = false;
  } else if (parameter == "departure_fraction") {
    c.departure_fraction = value;
  } else if (parameter == "inbound_bps") {
    c.inbound_bps = value;
  } else if (parameter == "free_rider_fraction") {
    c.free_rider_fraction = value;
  } else if (parameter == "neighbor_count") {
    c.neighbor_count = static_cast<int>(value);
  } else {
    throw ConfigError("unknown sweep parameter '" + parameter + "'");
  }
  return c;
}

FigureTable run_sweep(const SweepSpec& spec, std::vector<RunRecord>* keep_runs) {
  FigureTable table;
  table.parameter = spec.parameter;

  std::vector<Strategy> strategies = spec.strategies;
  std::sort(strategies.begin(), strategies.end(), [](Strategy a, Strategy b) {
    return to_string(a) < to_string(b);
  });
  std::vector<double> values = spec.values;
  std::sort(values.begin(), values.end());

  for (double value : values) {
    for (Strategy strat : strategies) {
      FigureRow row;
      row.value = value;
      row.strategy = strat;
      std::vector<double> ps;
      for (std::uint64_t seed : spec.seeds) {
        ScenarioConfig c = apply_parameter(spec.base, spec.parameter, value);
        c.strategy = strat;
        c.seed = seed;
        Metrics m = run_scenario(c);
        double share = m.total_bits > 0 ? m.server_bits / m.total_bits : 0.0;
        ps.push_back(share);
        row.mean_server_bps += m.server_bps();
        row.mean_optimal_ps += m.optimal_share;
        if (keep_runs) keep_runs->push_back({value, strat, seed, std::move(m)});
      }
      int n = static_cast<int>(ps.size());
      row.seeds = n;
      double mean = 0;
      for (double v : ps) mean += v;
      mean /= n;
      double var = 0;
      for (double v : ps) var += (v - mean) * (v - mean);
      row.mean_ps = mean;
      row.std_ps = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
      row.mean_server_bps /= n;
      row.mean_optimal_ps /= n;
      table.rows.push_back(row);
    }
  }
  return table;
}

void emit_csv(const FigureTable& table, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "%s,strategy,mean_ps,mean_server_bps,std_ps,optimal_ps,seeds\n",
               table.parameter.empty() ? "value" : table.parameter.c_str());
  for (const auto& r : table.rows) {
    std::fprintf(f, "%.6f,%s,%.6f,%.1f,%.6f,%.6f,%d\n", r.value, to_string(r.strategy).c_str(),
                 r.mean_ps, r.mean_server_bps, r.std_ps, r.mean_optimal_ps, r.seeds);
  }
  std::fclose(f);
}

PopulationSpec PopulationSpec::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open population file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), std::filesystem::path(path).parent_path().string());
}

PopulationSpec PopulationSpec::from_json_text(const std::string& text,
                                              const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("population file is not valid JSON: ") + e.what());
  }
  PopulationSpec pop;
  try {
    std::filesystem::path p = doc.at("layer_spec").get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    pop.graph = std::make_shared<LayerGraph>(LayerGraph::from_spec_file(p));

    std::map<LayerId, std::pair<int, double>> acc;  // count, outbound
    if (doc.contains("peers")) {
      for (const auto& peer : doc.at("peers")) {
        LayerId l{peer.at("vid").get<int>(), peer.at("tid").get<int>()};
        auto& slot = acc[l];
        slot.first += 1;
        slot.second += peer.value("outbound_bps", 0.0);
      }
    }
    if (doc.contains("subsets")) {
      for (const auto& s : doc.at("subsets")) {
        LayerId l{s.at("vid").get<int>(), s.at("tid").get<int>()};
        auto& slot = acc[l];
        slot.first += s.at("peer_count").get<int>();
        slot.second += s.at("total_outbound_bps").get<double>();
      }
    }
    if (acc.empty()) throw ConfigError("population declares no peers");
    for (const auto& [layer, cs] : acc) {
      pop.subsets.push_back(PeerSubsetStats::for_layer(*pop.graph, layer, cs.first, cs.second));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad population file: ") + e.what());
  }
  return pop;
}

void write_allocation_csv(const PopulationSpec& pop, const std::string& flows_path,
                          const std::string& quotas_path) {
  FlowNetwork net = build_flow_network(*pop.graph, pop.subsets);
  FlowSolution sol = max_flow(net);
  const int n_sup = static_cast<int>(net.subset_layer.size());

  std::FILE* f = std::fopen(flows_path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + flows_path);
  std::fprintf(f, "edge,from,to,capacity_bps,flow_bps\n");
  auto name = [&](int node) -> std::string {
    if (node == FlowNetwork::kSource) return "v";
    if (node == FlowNetwork::kSink) return "t";
    if (node - 2 < n_sup) return "s(" + to_string(pop.graph->layer_at(net.subset_layer[node - 2])) + ")";
    return "r(" + to_string(pop.graph->layer_at(net.receiving_layer[node - 2 - n_sup])) + ")";
  };
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    const auto& edge = net.edges[e];
    const char* kind = edge.from == FlowNetwork::kSource ? "source"
                       : edge.to == FlowNetwork::kSink   ? "sink"
                                                         : "supply";
    std::fprintf(f, "%s,%s,%s,%.1f,%.1f\n", kind, name(edge.from).c_str(), name(edge.to).c_str(),
                 edge.capacity, sol.flow[e]);
  }
  std::fclose(f);

  f = std::fopen(quotas_path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + quotas_path);
  std::fprintf(f, "layer,demanders,quota_bps,copies\n");
  for (std::size_t i = 0; i < net.receiving_layer.size(); ++i) {
    LayerId l = pop.graph->layer_at(net.receiving_layer[i]);
    double q = server_quota_bps(sol, net, *pop.graph, l);
    std::fprintf(f, "%s,%d,%.1f,%d\n", to_string(l).c_str(), net.demanders(l), q,
                 server_copy_count(q, static_cast<double>(pop.graph->bitrate_bps(l))));
  }
  std::fclose(f);
}

}  // namespace mvp2p
