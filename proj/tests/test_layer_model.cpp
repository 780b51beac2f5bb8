#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "mvp2p/layer_model.hpp"
#include "support/test_support.hpp"

using namespace mvp2p;
using mvp2p::testing::ballroom;

namespace {

std::set<LayerId> required_set(const LayerGraph& g, LayerId observing) {
  auto v = g.required_layers(observing);
  return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("ballroom spec loads with 20 layers, max tid 3") {
  LayerGraph g = ballroom();
  CHECK(g.layer_count() == 20);
  CHECK(g.max_tid() == 3);
  CHECK(g.gop_size() == 8);
  CHECK(g.view_decode_order() == std::vector<int>{0, 2, 1, 4, 3});
}

TEST_CASE("single base view at GOP 1 is a valid one-layer stream") {
  const char* text = R"({
    "name": "mono", "gop_size": 1, "decode_order": [0],
    "views": [{"vid": 0, "type": "base"}],
    "layers": [{"vid": 0, "tid": 0, "bitrate_bps": 1000, "deps": []}]
  })";
  LayerGraph g = LayerGraph::from_spec_text(text);
  CHECK(g.layer_count() == 1);
  CHECK(g.deps(LayerId{0, 0}).empty());
  CHECK(g.required_layers(LayerId{0, 0}) == std::vector<LayerId>{LayerId{0, 0}});
}

TEST_CASE("cyclic dependency specs are rejected") {
  const char* text = R"({
    "name": "cyc", "gop_size": 2, "decode_order": [0, 1],
    "views": [{"vid": 0, "type": "base"}, {"vid": 1, "type": "predicted"}],
    "layers": [
      {"vid": 0, "tid": 0, "bitrate_bps": 10, "deps": []},
      {"vid": 0, "tid": 1, "bitrate_bps": 10, "deps": ["1.0"]},
      {"vid": 1, "tid": 0, "bitrate_bps": 10, "deps": ["0.1"]},
      {"vid": 1, "tid": 1, "bitrate_bps": 10, "deps": ["1.0"]}
    ]
  })";
  CHECK_THROWS_AS(LayerGraph::from_spec_text(text), ConfigError);
}

TEST_CASE("duplicate layers and missing bitrates are rejected") {
  const char* dup = R"({
    "name": "d", "gop_size": 1, "decode_order": [0],
    "views": [{"vid": 0, "type": "base"}],
    "layers": [
      {"vid": 0, "tid": 0, "bitrate_bps": 10, "deps": []},
      {"vid": 0, "tid": 0, "bitrate_bps": 20, "deps": []}
    ]
  })";
  CHECK_THROWS_AS(LayerGraph::from_spec_text(dup), ConfigError);

  const char* missing = R"({
    "name": "m", "gop_size": 1, "decode_order": [0],
    "views": [{"vid": 0, "type": "base"}],
    "layers": [{"vid": 0, "tid": 0, "deps": []}]
  })";
  CHECK_THROWS_AS(LayerGraph::from_spec_text(missing), ConfigError);
}

TEST_CASE("required_layers matches the dependency structure") {
  LayerGraph g = ballroom();
  CHECK(required_set(g, {0, 0}) == std::set<LayerId>{{0, 0}});
  CHECK(required_set(g, {2, 1}) == std::set<LayerId>{{0, 0}, {2, 0}, {2, 1}});
  CHECK(required_set(g, {1, 0}) == std::set<LayerId>{{0, 0}, {2, 0}, {1, 0}});
  CHECK_THROWS_AS(g.required_layers(LayerId{9, 9}), std::invalid_argument);
}

TEST_CASE("redundant transitive edges are normalized away") {
  // 1.0 depends on both 0.0 and 2.0; 2.0 already pulls in 0.0.
  LayerGraph g = ballroom();
  CHECK(g.deps(LayerId{1, 0}) == std::vector<LayerId>{{2, 0}});
  CHECK(required_set(g, {1, 0}).count(LayerId{0, 0}) == 1);
}

TEST_CASE("layer DON ordering: lower tid first, then view decode order") {
  LayerGraph g = ballroom();
  CHECK(g.don(LayerId{0, 0}) == 0);
  CHECK(g.don(LayerId{2, 0}) < g.don(LayerId{1, 0}));
  CHECK(g.don(LayerId{3, 0}) < g.don(LayerId{0, 1}));

  // bijection onto 0..n-1
  std::set<int> dons;
  for (const LayerId& l : g.layers()) dons.insert(g.don(l));
  CHECK(static_cast<int>(dons.size()) == g.layer_count());
  CHECK(*dons.begin() == 0);
  CHECK(*dons.rbegin() == g.layer_count() - 1);
}

TEST_CASE("stream_bitrate sums exactly") {
  LayerGraph g = ballroom();
  CHECK(g.stream_bitrate(g.layers()) == 2'135'650);
  CHECK(g.stream_bitrate({}) == 0);
  CHECK(g.stream_bitrate(g.required_layers(LayerId{2, 1})) == 268'323 + 204'022 + 62'569);
  CHECK_THROWS_AS(g.stream_bitrate({LayerId{7, 7}}), std::invalid_argument);
}

TEST_CASE("closure monotonicity: deps have strictly smaller closures") {
  LayerGraph g = ballroom();
  for (const LayerId& x : g.layers()) {
    auto cx = required_set(g, x);
    for (const LayerId& y : g.deps(x)) {
      auto cy = required_set(g, y);
      CHECK(std::includes(cx.begin(), cx.end(), cy.begin(), cy.end()));
      CHECK(cy.size() < cx.size());
    }
    // every closure contains the base layer and the layer itself
    CHECK(cx.count(LayerId{0, 0}) == 1);
    CHECK(cx.count(x) == 1);
  }
}

TEST_CASE("closure minimality: every required layer is reachable via deps") {
  // Removing any member of required_layers(x) breaks decodability: each
  // member is either x or a dependency of another member.
  LayerGraph g = ballroom();
  for (const LayerId& x : g.layers()) {
    auto closure = required_set(g, x);
    for (const LayerId& removed : closure) {
      if (removed == x) continue;
      bool referenced = false;
      for (const LayerId& member : closure) {
        for (const LayerId& d : g.deps(member)) {
          if (d == removed) referenced = true;
        }
      }
      CHECK(referenced);
    }
  }
}

TEST_CASE("random graphs satisfy DON and closure invariants") {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 50; ++iter) {
    LayerGraph g = mvp2p::testing::random_layer_graph(rng);
    std::set<int> dons;
    for (const LayerId& l : g.layers()) {
      dons.insert(g.don(l));
      auto closure = required_set(g, l);
      CHECK(closure.count(l) == 1);
      for (const LayerId& d : g.deps(l)) {
        auto sub = required_set(g, d);
        CHECK(std::includes(closure.begin(), closure.end(), sub.begin(), sub.end()));
      }
    }
    CHECK(static_cast<int>(dons.size()) == g.layer_count());
  }
}
