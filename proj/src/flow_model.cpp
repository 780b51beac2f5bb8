#include "mvp2p/flow_model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace mvp2p {

PeerSubsetStats PeerSubsetStats::for_layer(const LayerGraph& graph, LayerId observing,
                                           int peer_count, double total_outbound_bps) {
  PeerSubsetStats s;
  s.observing = observing;
  s.peer_count = peer_count;
  s.total_outbound_bps = total_outbound_bps;
  for (const LayerId& l : graph.required_layers(observing)) s.demand_counts[l] = peer_count;
  return s;
}

int FlowNetwork::supplying_node(LayerId subset) const {
  int idx = graph->index_of(subset);
  for (std::size_t i = 0; i < subset_layer.size(); ++i) {
    if (subset_layer[i] == idx) return 2 + static_cast<int>(i);
  }
  return -1;
}

int FlowNetwork::receiving_node(LayerId layer) const {
  int idx = graph->index_of(layer);
  for (std::size_t i = 0; i < receiving_layer.size(); ++i) {
    if (receiving_layer[i] == idx) return 2 + static_cast<int>(subset_layer.size() + i);
  }
  return -1;
}

int FlowNetwork::demanders(LayerId layer) const {
  int node = receiving_node(layer);
  if (node < 0) return 0;
  return demand_n[node - 2 - static_cast<int>(subset_layer.size())];
}

double FlowSolution::flow_into_sink(const FlowNetwork& net, int receiving_node) const {
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    if (net.edges[e].from == receiving_node && net.edges[e].to == FlowNetwork::kSink) {
      return flow[e];
    }
  }
  return 0.0;
}

double FlowSolution::flow_from_source(const FlowNetwork& net, int supplying_node) const {
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    if (net.edges[e].from == FlowNetwork::kSource && net.edges[e].to == supplying_node) {
      return flow[e];
    }
  }
  return 0.0;
}

FlowNetwork build_flow_network(const LayerGraph& graph,
                               const std::vector<PeerSubsetStats>& population) {
  FlowNetwork net;
  net.graph = &graph;

  const int n_layers = graph.layer_count();
  std::vector<int> seen(n_layers, 0);
  std::vector<double> outbound(n_layers, 0.0);
  std::vector<int> demand(n_layers, 0);

  for (const PeerSubsetStats& s : population) {
    int idx = graph.index_of(s.observing);  // throws on unknown layer
    if (seen[idx]++) throw std::invalid_argument("duplicate peer subset for layer " + to_string(s.observing));
    outbound[idx] = s.total_outbound_bps;
    for (const auto& [layer, count] : s.demand_counts) demand[graph.index_of(layer)] += count;
  }

  for (int i = 0; i < n_layers; ++i) {
    if (seen[i]) net.subset_layer.push_back(i);
  }
  for (int i = 0; i < n_layers; ++i) {
    if (demand[i] > 0) net.receiving_layer.push_back(i);
  }
  const int n_sup = static_cast<int>(net.subset_layer.size());

  std::vector<int> receiving_node_of(n_layers, -1);
  std::vector<double> sink_cap(n_layers, 0.0);
  for (std::size_t i = 0; i < net.receiving_layer.size(); ++i) {
    int layer = net.receiving_layer[i];
    receiving_node_of[layer] = 2 + n_sup + static_cast<int>(i);
    net.demand_n.push_back(demand[layer]);
    sink_cap[layer] = static_cast<double>(demand[layer] - 1) * graph.bitrate_by_index(layer);
  }

  for (int i = 0; i < n_sup; ++i) {
    net.edges.push_back({FlowNetwork::kSource, 2 + i, outbound[net.subset_layer[i]]});
  }
  // A supplying node reaches exactly the receiving nodes of its closure. The
  // capacity is min(c(v,s), c(r,t)) as a tight finite stand-in for infinity.
  for (int i = 0; i < n_sup; ++i) {
    int subset = net.subset_layer[i];
    std::uint64_t mask = graph.required_mask(subset);
    for (int layer = 0; layer < n_layers; ++layer) {
      if (!(mask >> layer & 1) || receiving_node_of[layer] < 0) continue;
      net.edges.push_back({2 + i, receiving_node_of[layer],
                           std::min(outbound[subset], sink_cap[layer])});
    }
  }
  for (std::size_t i = 0; i < net.receiving_layer.size(); ++i) {
    int layer = net.receiving_layer[i];
    net.edges.push_back({receiving_node_of[layer], FlowNetwork::kSink, sink_cap[layer]});
  }
  return net;
}

namespace {

// Residual graph as paired directed arcs.
struct Residual {
  std::vector<int> head;          // per arc
  std::vector<double> cap;        // remaining capacity
  std::vector<std::vector<int>> adj;

  Residual(int nodes, const std::vector<FlowNetwork::Edge>& edges) : adj(nodes) {
    head.reserve(edges.size() * 2);
    cap.reserve(edges.size() * 2);
    for (const auto& e : edges) {
      adj[e.from].push_back(static_cast<int>(head.size()));
      head.push_back(e.to);
      cap.push_back(e.capacity);
      adj[e.to].push_back(static_cast<int>(head.size()));
      head.push_back(e.from);
      cap.push_back(0.0);
    }
  }
};

}  // namespace

FlowSolution max_flow(const FlowNetwork& net) {
  FlowSolution sol;
  sol.flow.assign(net.edges.size(), 0.0);
  if (net.edges.empty()) return sol;

  Residual r(net.node_count(), net.edges);
  std::vector<int> parent_arc(net.node_count());
  const double eps = 1e-12;

  for (;;) {
    // BFS over residual arcs in construction order keeps paths canonical.
    std::fill(parent_arc.begin(), parent_arc.end(), -1);
    std::deque<int> queue{FlowNetwork::kSource};
    parent_arc[FlowNetwork::kSource] = -2;
    while (!queue.empty() && parent_arc[FlowNetwork::kSink] == -1) {
      int u = queue.front();
      queue.pop_front();
      for (int arc : r.adj[u]) {
        int v = r.head[arc];
        if (parent_arc[v] == -1 && r.cap[arc] > eps) {
          parent_arc[v] = arc;
          queue.push_back(v);
        }
      }
    }
    if (parent_arc[FlowNetwork::kSink] == -1) break;

    double bottleneck = std::numeric_limits<double>::infinity();
    for (int v = FlowNetwork::kSink; v != FlowNetwork::kSource;) {
      int arc = parent_arc[v];
      bottleneck = std::min(bottleneck, r.cap[arc]);
      v = r.head[arc ^ 1];
    }
    for (int v = FlowNetwork::kSink; v != FlowNetwork::kSource;) {
      int arc = parent_arc[v];
      r.cap[arc] -= bottleneck;
      r.cap[arc ^ 1] += bottleneck;
      v = r.head[arc ^ 1];
    }
    sol.max_flow_value += bottleneck;
  }

  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    sol.flow[e] = net.edges[e].capacity - r.cap[2 * e];
    if (sol.flow[e] < 0 && sol.flow[e] > -1e-9) sol.flow[e] = 0.0;
  }
  return sol;
}

FlowSolution max_flow_balanced(const FlowNetwork& net) {
  FlowSolution sol = max_flow(net);
  const int n_sup = static_cast<int>(net.subset_layer.size());
  const int n_rec = static_cast<int>(net.receiving_layer.size());
  if (n_sup == 0 || n_rec == 0) return sol;

  std::vector<double> row_cap(n_sup, 0.0);
  std::vector<double> col_target(n_rec, 0.0);
  std::vector<std::vector<int>> eligible(n_rec);  // supplier slots per receiver
  std::vector<std::vector<int>> edge_of(n_sup, std::vector<int>(n_rec, -1));
  std::vector<int> source_edge(n_sup, -1), sink_edge(n_rec, -1);

  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    const auto& edge = net.edges[e];
    if (edge.from == FlowNetwork::kSource) {
      row_cap[edge.to - 2] = edge.capacity;
      source_edge[edge.to - 2] = static_cast<int>(e);
    } else if (edge.to == FlowNetwork::kSink) {
      col_target[edge.from - 2 - n_sup] = sol.flow[e];
      sink_edge[edge.from - 2 - n_sup] = static_cast<int>(e);
    } else {
      int s = edge.from - 2;
      int r = edge.to - 2 - n_sup;
      eligible[r].push_back(s);
      edge_of[s][r] = static_cast<int>(e);
    }
  }

  std::vector<std::vector<double>> x(n_sup, std::vector<double>(n_rec, 0.0));
  std::vector<double> load(n_sup, 0.0);

  // Water-fill each receiver's inflow over its suppliers, equalizing row
  // utilization; a few sweeps reach a stable balanced point. Feasibility is
  // preserved because the previous assignment of the column is always one
  // admissible refill.
  for (int sweep = 0; sweep < 8; ++sweep) {
    for (int r = 0; r < n_rec; ++r) {
      double need = col_target[r];
      if (need <= 0 || eligible[r].empty()) continue;
      for (int s : eligible[r]) {
        load[s] -= x[s][r];
        x[s][r] = 0.0;
      }
      // find the utilization level at which the column demand is met
      std::vector<int> rows;
      for (int s : eligible[r]) {
        if (row_cap[s] > 0) rows.push_back(s);
      }
      std::sort(rows.begin(), rows.end(), [&](int a, int b) {
        double ua = load[a] / row_cap[a], ub = load[b] / row_cap[b];
        if (ua != ub) return ua < ub;
        return a < b;
      });
      double lo = 0.0, hi = 1.0;
      auto fill_at = [&](double level) {
        double total = 0.0;
        for (int s : rows) total += std::max(0.0, level * row_cap[s] - load[s]);
        return total;
      };
      if (fill_at(1.0) <= need + 1e-9) {
        hi = 1.0;  // everything saturates (or the previous flow was maximal at caps)
      }
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        (fill_at(mid) < need ? lo : hi) = mid;
      }
      double assigned = 0.0;
      for (int s : rows) {
        double amount = std::max(0.0, hi * row_cap[s] - load[s]);
        x[s][r] = amount;
        assigned += amount;
      }
      // numeric slack goes to the least-utilized rows in order
      double rem = need - assigned;
      for (int s : rows) {
        if (rem <= 1e-9) break;
        double room = row_cap[s] - load[s] - x[s][r];
        double add = std::min(room, rem);
        if (add > 0) {
          x[s][r] += add;
          rem -= add;
        }
      }
      for (int s : eligible[r]) load[s] += x[s][r];
    }
  }

  for (int s = 0; s < n_sup; ++s) {
    double row = 0.0;
    for (int r = 0; r < n_rec; ++r) {
      if (edge_of[s][r] >= 0) {
        sol.flow[edge_of[s][r]] = x[s][r];
        row += x[s][r];
      }
    }
    sol.flow[source_edge[s]] = row;
  }
  for (int r = 0; r < n_rec; ++r) sol.flow[sink_edge[r]] = col_target[r];
  return sol;
}

std::map<LayerId, double> supply_proportions(const FlowSolution& sol, const FlowNetwork& net,
                                             LayerId subset) {
  int s = net.supplying_node(subset);
  if (s < 0) throw std::invalid_argument("no peer subset for layer " + to_string(subset));
  double total = sol.flow_from_source(net, s);
  std::map<LayerId, double> out;
  if (total <= 0) return out;
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    if (net.edges[e].from != s) continue;
    if (sol.flow[e] > 0) {
      int layer = net.receiving_layer[net.edges[e].to - 2 - static_cast<int>(net.subset_layer.size())];
      out[net.graph->layer_at(layer)] = sol.flow[e] / total;
    }
  }
  return out;
}

std::map<LayerId, double> selection_proportions(const FlowSolution& sol, const FlowNetwork& net,
                                                LayerId layer) {
  int rnode = net.receiving_node(layer);
  if (rnode < 0) throw std::invalid_argument("no receiving node for layer " + to_string(layer));
  double total = sol.flow_into_sink(net, rnode);
  std::map<LayerId, double> out;
  if (total <= 0) return out;
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    if (net.edges[e].to != rnode || net.edges[e].from == FlowNetwork::kSource) continue;
    if (sol.flow[e] > 0) {
      int subset = net.subset_layer[net.edges[e].from - 2];
      out[net.graph->layer_at(subset)] = sol.flow[e] / total;
    }
  }
  return out;
}

double server_quota_bps(const FlowSolution& sol, const FlowNetwork& net, const LayerGraph& graph,
                        LayerId layer) {
  int rnode = net.receiving_node(layer);
  if (rnode < 0) throw std::invalid_argument("layer " + to_string(layer) + " demanded by no peer");
  int n = net.demanders(layer);
  return static_cast<double>(n) * static_cast<double>(graph.bitrate_bps(layer)) -
         sol.flow_into_sink(net, rnode);
}

int server_copy_count(double quota_bps, double rate_bps) {
  if (rate_bps <= 0) throw std::invalid_argument("chunk rate must be positive");
  if (quota_bps <= 0) return 0;
  return static_cast<int>(std::ceil(quota_bps / rate_bps - 1e-9));
}

double theoretical_optimal_share(const LayerGraph& graph,
                                 const std::vector<PeerSubsetStats>& population) {
  int peers = 0;
  for (const PeerSubsetStats& s : population) peers += s.peer_count;
  if (peers == 0) throw std::invalid_argument("population is empty");

  FlowNetwork net = build_flow_network(graph, population);
  FlowSolution sol = max_flow(net);

  double total_demand = 0.0;
  for (std::size_t i = 0; i < net.receiving_layer.size(); ++i) {
    total_demand += static_cast<double>(net.demand_n[i]) *
                    static_cast<double>(graph.bitrate_by_index(net.receiving_layer[i]));
  }
  // Accounting identity: sum of quotas = total demand - max flow.
  return (total_demand - sol.max_flow_value) / total_demand;
}

}  // namespace mvp2p
