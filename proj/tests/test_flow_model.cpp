#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mvp2p/flow_model.hpp"
#include "support/test_support.hpp"

using namespace mvp2p;
using namespace mvp2p::testing;

namespace {

// Two-view graph with equal unit bitrates matching the worked four-peer
// example: 0.0 <- 2.0, 0.0 <- 0.1, 2.0 <- 2.1.
LayerGraph fig3_graph(std::int64_t rate = 100000) {
  std::string r = std::to_string(rate);
  std::string text = R"({
    "name": "fig3", "gop_size": 2, "decode_order": [0, 2],
    "views": [{"vid": 0, "type": "base"}, {"vid": 2, "type": "predicted"}],
    "layers": [
      {"vid": 0, "tid": 0, "bitrate_bps": )" + r + R"(, "deps": []},
      {"vid": 0, "tid": 1, "bitrate_bps": )" + r + R"(, "deps": ["0.0"]},
      {"vid": 2, "tid": 0, "bitrate_bps": )" + r + R"(, "deps": ["0.0"]},
      {"vid": 2, "tid": 1, "bitrate_bps": )" + r + R"(, "deps": ["2.0"]}
    ]
  })";
  return LayerGraph::from_spec_text(text);
}

}  // namespace

TEST_CASE("empty population builds a network with only source and sink") {
  LayerGraph g = ballroom();
  FlowNetwork net = build_flow_network(g, {});
  CHECK(net.node_count() == 2);
  CHECK(net.edges.empty());
  CHECK(max_flow(net).max_flow_value == 0.0);
}

TEST_CASE("two-peer network from the greedy-failure starting point") {
  LayerGraph g = fig3_graph();
  std::vector<PeerSubsetStats> pop{
      PeerSubsetStats::for_layer(g, {0, 1}, 1, 200000),
      PeerSubsetStats::for_layer(g, {2, 1}, 1, 300000),
  };
  FlowNetwork net = build_flow_network(g, pop);

  CHECK(net.demanders(LayerId{0, 0}) == 2);
  CHECK(net.demanders(LayerId{0, 1}) == 1);
  CHECK(net.demanders(LayerId{2, 0}) == 1);
  CHECK(net.demanders(LayerId{2, 1}) == 1);

  auto sink_cap = [&](LayerId l) {
    int node = net.receiving_node(l);
    for (const auto& e : net.edges) {
      if (e.from == node && e.to == FlowNetwork::kSink) return e.capacity;
    }
    return -1.0;
  };
  CHECK(sink_cap({0, 0}) == doctest::Approx(100000.0));
  CHECK(sink_cap({0, 1}) == doctest::Approx(0.0));
  CHECK(sink_cap({2, 1}) == doctest::Approx(0.0));
}

TEST_CASE("source capacity equals subset outbound, sink capacity (n-1)R") {
  LayerGraph g = ballroom();
  auto pop = std::vector<PeerSubsetStats>{PeerSubsetStats::for_layer(g, {0, 0}, 100, 80e6)};
  FlowNetwork net = build_flow_network(g, pop);
  int s = net.supplying_node(LayerId{0, 0});
  REQUIRE(s >= 0);
  for (const auto& e : net.edges) {
    if (e.from == FlowNetwork::kSource) CHECK(e.capacity == doctest::Approx(80e6));
    if (e.to == FlowNetwork::kSink) CHECK(e.capacity == doctest::Approx(99.0 * 268323));
  }
  CHECK_THROWS_AS(build_flow_network(g, {pop[0], pop[0]}), std::invalid_argument);
}

TEST_CASE("single bottleneck network solves to the sink capacity") {
  // one supplier (10 peers worth of bandwidth), one layer demanded by 5
  LayerGraph g = fig3_graph(1);
  auto pop = std::vector<PeerSubsetStats>{PeerSubsetStats::for_layer(g, {0, 0}, 5, 10.0)};
  FlowNetwork net = build_flow_network(g, pop);
  FlowSolution sol = max_flow(net);
  CHECK(sol.max_flow_value == doctest::Approx(4.0));  // (5-1) * R, R = 1
  CHECK(flow_is_feasible(net, sol));
}

TEST_CASE("four-peer scenario: peers cover all but one copy per layer") {
  // Peers 1 and 4 watch 0.1 (outbound 2R each); peers 2 and 3 watch 2.1
  // (outbound 3R each). Max flow fills every sink edge, so the servers need
  // exactly one copy per demanded layer.
  const double R = 100000;
  LayerGraph g = fig3_graph();
  std::vector<PeerSubsetStats> pop{
      PeerSubsetStats::for_layer(g, {0, 1}, 2, 4 * R),
      PeerSubsetStats::for_layer(g, {2, 1}, 2, 6 * R),
  };
  FlowNetwork net = build_flow_network(g, pop);
  FlowSolution sol = max_flow(net);

  CHECK(sol.max_flow_value == doctest::Approx(6 * R));
  CHECK(sol.max_flow_value == doctest::Approx(min_cut_oracle(net)));
  for (LayerId l : {LayerId{0, 0}, LayerId{0, 1}, LayerId{2, 0}, LayerId{2, 1}}) {
    CHECK(server_quota_bps(sol, net, g, l) == doctest::Approx(R));
    CHECK(server_copy_count(server_quota_bps(sol, net, g, l), R) == 1);
  }
}

TEST_CASE("solver matches the exhaustive min-cut oracle on random instances") {
  std::mt19937_64 rng(20260810);
  for (int iter = 0; iter < 300; ++iter) {
    LayerGraph g = random_layer_graph(rng);
    auto pop = random_population(g, rng);
    FlowNetwork net = build_flow_network(g, pop);
    FlowSolution sol = max_flow(net);
    double oracle = min_cut_oracle(net);
    double scale = std::max(1.0, oracle);
    CHECK(std::abs(sol.max_flow_value - oracle) / scale < 1e-6);
    CHECK(flow_is_feasible(net, sol));
  }
}

TEST_CASE("monotonicity: raising a subset's outbound never lowers the flow") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 100; ++iter) {
    LayerGraph g = random_layer_graph(rng);
    auto pop = random_population(g, rng);
    double before = max_flow(build_flow_network(g, pop)).max_flow_value;
    pop[rng() % pop.size()].total_outbound_bps += 250000.0;
    double after = max_flow(build_flow_network(g, pop)).max_flow_value;
    CHECK(after >= before - 1e-6);
  }
}

TEST_CASE("quota accounting identity: sum of quotas + flow = total demand") {
  std::mt19937_64 rng(4242);
  for (int iter = 0; iter < 100; ++iter) {
    LayerGraph g = random_layer_graph(rng);
    auto pop = random_population(g, rng);
    FlowNetwork net = build_flow_network(g, pop);
    FlowSolution sol = max_flow(net);
    double quota_sum = 0.0, demand = 0.0;
    for (std::size_t i = 0; i < net.receiving_layer.size(); ++i) {
      LayerId l = g.layer_at(net.receiving_layer[i]);
      double q = server_quota_bps(sol, net, g, l);
      double rate = static_cast<double>(g.bitrate_bps(l));
      int n = net.demanders(l);
      CHECK(q >= rate - 1e-6);            // at least one copy
      CHECK(q <= n * rate + 1e-6);
      quota_sum += q;
      demand += n * rate;
    }
    CHECK(quota_sum + sol.max_flow_value == doctest::Approx(demand));
  }
}

TEST_CASE("proportions sum to one over their support") {
  std::mt19937_64 rng(5151);
  for (int iter = 0; iter < 100; ++iter) {
    LayerGraph g = random_layer_graph(rng);
    auto pop = random_population(g, rng);
    FlowNetwork net = build_flow_network(g, pop);
    FlowSolution sol = max_flow(net);

    for (const auto& s : pop) {
      auto props = supply_proportions(sol, net, s.observing);
      double from_source = sol.flow_from_source(net, net.supplying_node(s.observing));
      if (from_source > 0) {
        double sum = 0;
        for (auto& [l, f] : props) {
          CHECK(f >= 0.0);
          sum += f;
        }
        CHECK(sum == doctest::Approx(1.0));
      } else {
        CHECK(props.empty());
      }
    }
    for (std::size_t i = 0; i < net.receiving_layer.size(); ++i) {
      LayerId l = g.layer_at(net.receiving_layer[i]);
      auto props = selection_proportions(sol, net, l);
      double into_sink = sol.flow_into_sink(net, net.receiving_node(l));
      if (into_sink > 0) {
        double sum = 0;
        for (auto& [sl, f] : props) sum += f;
        CHECK(sum == doctest::Approx(1.0));
      } else {
        CHECK(props.empty());
      }
    }
  }
}

TEST_CASE("proportion arithmetic on a forced 3:1 split") {
  // Sink capacities pin the optimal flow: 400k of subset outbound must split
  // 300k to r(0.0) and 100k to r(0.1), giving supply proportions .75/.25.
  LayerGraph g = fig3_graph();
  std::vector<PeerSubsetStats> pop{
      PeerSubsetStats::for_layer(g, {0, 0}, 2, 0.0),      // demand only
      PeerSubsetStats::for_layer(g, {0, 1}, 2, 400000),   // supplies 0.0 and 0.1
  };
  FlowNetwork net = build_flow_network(g, pop);
  FlowSolution sol = max_flow(net);
  // demand: 0.0 x4 -> sink cap 3R = 300k; 0.1 x2 -> sink cap R = 100k
  CHECK(sol.max_flow_value == doctest::Approx(400000.0));

  auto sup = supply_proportions(sol, net, {0, 1});
  CHECK(sup.size() == 2);
  CHECK(sup[{0, 0}] == doctest::Approx(0.75));
  CHECK(sup[{0, 1}] == doctest::Approx(0.25));
  CHECK(supply_proportions(sol, net, {0, 0}).empty());  // zero outbound subset

  auto sel = selection_proportions(sol, net, {0, 0});
  CHECK(sel.size() == 1);
  CHECK(sel[{0, 1}] == doctest::Approx(1.0));

  CHECK_THROWS_AS(selection_proportions(sol, net, {9, 9}), std::invalid_argument);
  CHECK_THROWS_AS(supply_proportions(sol, net, {2, 1}), std::invalid_argument);
}

TEST_CASE("server quota bounds and single-demander case") {
  LayerGraph g = fig3_graph();
  std::vector<PeerSubsetStats> pop{PeerSubsetStats::for_layer(g, {2, 1}, 1, 1e9)};
  FlowNetwork net = build_flow_network(g, pop);
  FlowSolution sol = max_flow(net);
  // single demander: sink capacity 0 forces u(r,t)=0 and quota = R exactly
  CHECK(sol.max_flow_value == doctest::Approx(0.0));
  for (LayerId l : {LayerId{0, 0}, LayerId{2, 0}, LayerId{2, 1}}) {
    CHECK(server_quota_bps(sol, net, g, l) == doctest::Approx(100000.0));
  }
  CHECK_THROWS_AS(server_quota_bps(sol, net, g, {0, 1}), std::invalid_argument);
}

TEST_CASE("server copy count ceiling arithmetic") {
  CHECK(server_copy_count(0.0, 100.0) == 0);
  CHECK(server_copy_count(100.0, 100.0) == 1);
  CHECK(server_copy_count(250.0, 100.0) == 3);
  CHECK(server_copy_count(100.0 * (1 + 1e-12), 100.0) == 1);  // float noise
  CHECK_THROWS_AS(server_copy_count(10.0, 0.0), std::invalid_argument);
}

TEST_CASE("theoretical optimal share") {
  LayerGraph g = ballroom();

  SUBCASE("all-zero outbound means the servers supply everything") {
    std::vector<PeerSubsetStats> pop{
        PeerSubsetStats::for_layer(g, {0, 1}, 10, 0.0),
        PeerSubsetStats::for_layer(g, {3, 2}, 5, 0.0),
    };
    CHECK(theoretical_optimal_share(g, pop) == doctest::Approx(1.0));
  }

  SUBCASE("ample outbound approaches one copy per demanded layer") {
    std::vector<PeerSubsetStats> pop;
    int count = 0;
    for (const LayerId& l : g.layers()) {
      pop.push_back(PeerSubsetStats::for_layer(g, l, 5, 5 * 2e6 * 0.4));
      count += 5;
    }
    double share = theoretical_optimal_share(g, pop);
    // server still provides one copy of each of the 20 layers
    double demand = 0;
    for (const LayerId& l : g.layers()) {
      demand += 5.0 * static_cast<double>(g.stream_bitrate(g.required_layers(l)));
    }
    CHECK(share == doctest::Approx(2135650.0 / demand).epsilon(0.01));
  }

  SUBCASE("empty population is rejected") {
    CHECK_THROWS_AS(theoretical_optimal_share(g, {}), std::invalid_argument);
  }
}
