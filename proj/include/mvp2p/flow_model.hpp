#pragma once

#include <map>
#include <vector>

#include "mvp2p/layer_model.hpp"

namespace mvp2p {

/// Aggregate of the peers watching (or intending to watch) one layer.
struct PeerSubsetStats {
  LayerId observing;
  int peer_count = 0;
  double total_outbound_bps = 0.0;
  /// Number of subset members requiring each layer; every member requires
  /// exactly the dependency closure of the observing layer.
  std::map<LayerId, int> demand_counts;

  static PeerSubsetStats for_layer(const LayerGraph& graph, LayerId observing,
                                   int peer_count, double total_outbound_bps);
};

/// The bandwidth-allocation flow network: source -> supplying node per peer
/// subset -> receiving node per demanded layer -> sink.
///
/// Node ids: 0 = source, 1 = sink, 2..2+S-1 supplying, then receiving.
struct FlowNetwork {
  struct Edge {
    int from = 0;
    int to = 0;
    double capacity = 0.0;
  };

  static constexpr int kSource = 0;
  static constexpr int kSink = 1;

  const LayerGraph* graph = nullptr;
  std::vector<int> subset_layer;     // supplying node order: layer index asc
  std::vector<int> receiving_layer;  // receiving node order: layer index asc
  std::vector<int> demand_n;         // demanders per receiving node
  std::vector<Edge> edges;           // v->s, then s->r, then r->t

  int node_count() const {
    return 2 + static_cast<int>(subset_layer.size() + receiving_layer.size());
  }
  int supplying_node(LayerId subset) const;    // -1 if absent
  int receiving_node(LayerId layer) const;     // -1 if absent
  int demanders(LayerId layer) const;          // 0 if no receiving node
};

/// Edge flows of a maximum flow, parallel to FlowNetwork::edges.
struct FlowSolution {
  std::vector<double> flow;
  double max_flow_value = 0.0;

  double flow_into_sink(const FlowNetwork& net, int receiving_node) const;
  double flow_from_source(const FlowNetwork& net, int supplying_node) const;
};

/// Builds the network for a peer population. Layers demanded by nobody get
/// no receiving node; subsets with zero peers or zero outbound are kept as
/// zero-capacity supplying nodes so node indexing is stable across
/// recalculations.
FlowNetwork build_flow_network(const LayerGraph& graph,
                               const std::vector<PeerSubsetStats>& population);

/// Shortest-augmenting-path maximum flow. Deterministic: nodes and edges are
/// visited in the fixed construction order, so identical inputs produce
/// identical solutions.
FlowSolution max_flow(const FlowNetwork& net);

/// A maximum flow with the same value and the same per-layer inflows as
/// max_flow(net), but with each receiving node's inflow spread across all
/// its eligible subsets by capacity-proportional water-filling. Plain
/// augmenting-path solutions saturate whichever subsets the search visits
/// first, which degenerates the Eq-4/5 proportions that drive scheduling;
/// spreading keeps every willing subset in the sampling support.
FlowSolution max_flow_balanced(const FlowNetwork& net);

/// Eq-style proportions. Both return fractions summing to 1 over their
/// support, or an empty map when the denominator flow is zero.
std::map<LayerId, double> supply_proportions(const FlowSolution& sol, const FlowNetwork& net,
                                             LayerId subset);
std::map<LayerId, double> selection_proportions(const FlowSolution& sol, const FlowNetwork& net,
                                                LayerId layer);

/// Server bandwidth needed for `layer`: n*R - u(r, t). Throws if the layer
/// has no demanders.
double server_quota_bps(const FlowSolution& sol, const FlowNetwork& net, const LayerGraph& graph,
                        LayerId layer);

/// Number of chunk copies the server must inject: ceil(quota / rate).
int server_copy_count(double quota_bps, double rate_bps);

/// Minimum achievable server share of total serving bandwidth for a
/// population: sum of quotas over demanded layers divided by total demand.
double theoretical_optimal_share(const LayerGraph& graph,
                                 const std::vector<PeerSubsetStats>& population);

}  // namespace mvp2p
