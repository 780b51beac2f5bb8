#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvp2p/flow_model.hpp"
#include "mvp2p/layer_model.hpp"

namespace mvp2p::testing {

#ifndef MVP2P_DATA_DIR
#error "MVP2P_DATA_DIR must be defined by the build"
#endif

inline std::string data_path(const std::string& name) {
  return std::string(MVP2P_DATA_DIR) + "/" + name;
}

inline LayerGraph ballroom() { return LayerGraph::from_spec_file(data_path("ballroom.json")); }

/// Independent maximum-flow oracle: exhaustively enumerates every source/sink
/// cut of the three-level network and returns the minimum cut capacity, which
/// equals the maximum flow. Never touches the augmenting-path solver.
///
/// For a fixed choice of supplying nodes on the source side, each receiving
/// node independently contributes min(its sink-edge capacity, the capacity of
/// the supplier->receiver edges crossing the cut), so only the 2^S supplier
/// subsets need enumeration.
inline double min_cut_oracle(const FlowNetwork& net) {
  const int n_sup = static_cast<int>(net.subset_layer.size());
  const int n_rec = static_cast<int>(net.receiving_layer.size());
  if (n_sup == 0 || n_rec == 0) return 0.0;

  std::vector<double> source_cap(n_sup, 0.0);
  std::vector<double> sink_cap(n_rec, 0.0);
  // cross[s][r] = capacity of the s->r edge (0 if absent).
  std::vector<std::vector<double>> cross(n_sup, std::vector<double>(n_rec, 0.0));
  for (const auto& e : net.edges) {
    if (e.from == FlowNetwork::kSource) {
      source_cap[e.to - 2] = e.capacity;
    } else if (e.to == FlowNetwork::kSink) {
      sink_cap[e.from - 2 - n_sup] = e.capacity;
    } else {
      cross[e.from - 2][e.to - 2 - n_sup] = e.capacity;
    }
  }

  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t subset = 0; subset < (1u << n_sup); ++subset) {
    double cut = 0.0;
    for (int s = 0; s < n_sup; ++s) {
      if (!(subset >> s & 1)) cut += source_cap[s];
    }
    for (int r = 0; r < n_rec; ++r) {
      double crossing = 0.0;
      for (int s = 0; s < n_sup; ++s) {
        if (subset >> s & 1) crossing += cross[s][r];
      }
      cut += std::min(sink_cap[r], crossing);
    }
    best = std::min(best, cut);
  }
  return best;
}

/// Asserts capacity and conservation constraints; returns false with no
/// diagnostics (callers CHECK the result) if any is violated.
inline bool flow_is_feasible(const FlowNetwork& net, const FlowSolution& sol, double tol = 1e-6) {
  std::vector<double> net_in(net.node_count(), 0.0);
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    if (sol.flow[e] < -tol || sol.flow[e] > net.edges[e].capacity + tol) return false;
    net_in[net.edges[e].to] += sol.flow[e];
    net_in[net.edges[e].from] -= sol.flow[e];
  }
  for (int v = 2; v < net.node_count(); ++v) {
    if (std::abs(net_in[v]) > tol) return false;
  }
  return std::abs(net_in[FlowNetwork::kSink] - sol.max_flow_value) <= tol &&
         std::abs(net_in[FlowNetwork::kSource] + sol.max_flow_value) <= tol;
}

/// Random small layer graph: 1..3 views, GOP in {1,2,4}, at most 8 layers.
/// Dependencies always point to earlier decode-order views or lower tids, so
/// the result is a DAG by construction.
inline LayerGraph random_layer_graph(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); };
  int views = pick(1, 3);
  int gop = 1 << pick(0, 2);
  int tids = 1;
  for (int g = gop; g > 1; g /= 2) ++tids;
  while (views * tids > 8) {
    if (tids > 1) {
      gop /= 2;
      --tids;
    } else {
      --views;
    }
  }

  std::string text = "{\"name\":\"rand\",\"gop_size\":" + std::to_string(gop) + ",\"decode_order\":[";
  for (int v = 0; v < views; ++v) text += (v ? "," : "") + std::to_string(v);
  text += "],\"views\":[";
  for (int v = 0; v < views; ++v) {
    text += (v ? "," : "");
    text += "{\"vid\":" + std::to_string(v) + ",\"type\":\"" +
            (v == 0 ? "base" : (v % 2 ? "bi-predicted" : "predicted")) + "\"}";
  }
  text += "],\"layers\":[";
  bool first = true;
  for (int v = 0; v < views; ++v) {
    for (int t = 0; t < tids; ++t) {
      if (!first) text += ",";
      first = false;
      std::int64_t rate = 50000 + static_cast<std::int64_t>(rng() % 400000);
      text += "{\"vid\":" + std::to_string(v) + ",\"tid\":" + std::to_string(t) +
              ",\"bitrate_bps\":" + std::to_string(rate) + ",\"deps\":[";
      std::vector<std::string> deps;
      if (t > 0) deps.push_back(std::to_string(v) + "." + std::to_string(t - 1));
      if (v > 0 && t == 0) {
        // at least one inter-view reference so the graph stays connected
        int ref = pick(0, v - 1);
        deps.push_back(std::to_string(ref) + ".0");
        if (v > 1 && (rng() & 1)) {
          int extra = pick(0, v - 1);
          if (extra != ref) deps.push_back(std::to_string(extra) + ".0");
        }
      } else if (v > 0 && (rng() & 1)) {
        deps.push_back(std::to_string(pick(0, v - 1)) + "." + std::to_string(t));
      }
      for (std::size_t i = 0; i < deps.size(); ++i) text += (i ? ",\"" : "\"") + deps[i] + "\"";
      text += "]}";
    }
  }
  text += "]}";
  return LayerGraph::from_spec_text(text);
}

/// Random population over the graph's layers, at most `max_peers` in total.
inline std::vector<PeerSubsetStats> random_population(const LayerGraph& g, std::mt19937_64& rng,
                                                      int max_peers = 20) {
  std::vector<PeerSubsetStats> pop;
  int budget = 1 + static_cast<int>(rng() % max_peers);
  for (const LayerId& layer : g.layers()) {
    if (budget <= 0) break;
    if (rng() % 3 == 0) continue;
    int count = 1 + static_cast<int>(rng() % 4);
    count = std::min(count, budget);
    budget -= count;
    double outbound = static_cast<double>(rng() % 4000000);
    if (rng() % 8 == 0) outbound = 0.0;
    pop.push_back(PeerSubsetStats::for_layer(g, layer, count, outbound));
  }
  if (pop.empty()) pop.push_back(PeerSubsetStats::for_layer(g, g.layers()[0], 1, 1e6));
  return pop;
}

}  // namespace mvp2p::testing
