#pragma once

#include <memory>

#include "mvp2p/flow_model.hpp"
#include "mvp2p/metrics.hpp"
#include "mvp2p/peer_mvp2p.hpp"
#include "mvp2p/scenario.hpp"
#include "mvp2p/tracker.hpp"
#include "mvp2p/topology.hpp"

namespace mvp2p {

/// Allocation result a peer works from: proportion tables derived from the
/// latest maximum-flow solution plus per-layer server quotas and copy
/// counts. Immutable once published.
struct AllocationTables {
  std::uint32_t version = 0;
  /// supply[subset layer] = (receiving layer, share of the subset's flow)
  std::vector<std::vector<std::pair<int, double>>> supply;
  /// selection[layer] = (subset layer, share of the layer's peer supply)
  std::vector<std::vector<std::pair<int, double>>> selection;
  std::vector<double> quota_bps;  // per layer; 0 when undemanded
  std::vector<int> copies;        // N per layer

  double supply_share(int subset, int layer) const;  // rho for one pair, 0 if absent
};

/// Test/diagnostic hooks. All callbacks run synchronously inside the event
/// loop; implementations must not mutate the simulation.
class SimObserver {
 public:
  virtual ~SimObserver() = default;
  virtual void on_recalc(double /*t*/, const FlowNetwork&, const FlowSolution&,
                         const AllocationTables&) {}
  virtual void on_tracker_change(double /*t*/, const TrackerState&) {}
  virtual void on_request(double /*t*/, int /*peer*/, ChunkRef, bool /*emergent*/,
                          int /*target*/) {}
  virtual void on_deliver(double /*t*/, int /*from*/, int /*from_subset*/, int /*to*/, ChunkRef,
                          double /*bits*/) {}
};

class Simulation {
 public:
  explicit Simulation(ScenarioConfig cfg);
  ~Simulation();

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  void set_observer(SimObserver* obs);
  Metrics run();

  const LayerGraph& graph() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper: construct, run, return metrics.
Metrics run_scenario(const ScenarioConfig& cfg, SimObserver* obs = nullptr);

}  // namespace mvp2p
