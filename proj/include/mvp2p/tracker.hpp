#pragma once

#include <memory>
#include <vector>

#include "mvp2p/flow_model.hpp"
#include "mvp2p/layer_model.hpp"

namespace mvp2p {

/// The tracker's global knowledge: per-peer status (observing layer and
/// outbound bandwidth) plus the per-subset aggregates the flow model
/// consumes. Updates are instantaneous; recalculation timing is the caller's
/// job, driven by change_requires_immediate_recalc().
class TrackerState {
 public:
  TrackerState() = default;
  TrackerState(std::shared_ptr<const LayerGraph> graph, double recalc_interval_s,
               double player_start_s);

  void peer_join(int peer, int observing_layer, double outbound_bps);
  void peer_depart(int peer);
  /// A switching peer moves to the target subset immediately ("intending to
  /// watch"); its demand follows the target closure.
  void layer_switch(int peer, int target_layer);

  /// One subset per graph layer, zero-capacity subsets included so that flow
  /// network node indexing stays stable across recalculations.
  std::vector<PeerSubsetStats> population() const;

  /// True when the incremental subset table equals a fresh aggregation of
  /// the per-peer status table.
  bool consistent() const;

  int active_peers() const { return active_; }
  int observing_of(int peer) const { return status_[peer].observing; }
  bool is_active(int peer) const {
    return peer >= 0 && peer < static_cast<int>(status_.size()) && status_[peer].active;
  }
  int subset_peer_count(int layer) const { return subset_count_[layer]; }
  double subset_outbound(int layer) const { return subset_out_[layer]; }
  int demand_count(int layer) const { return demand_[layer]; }

  /// Next chunk index the virtual media player will consume at `now`.
  int execution_index(double now) const;

  double recalc_interval() const { return interval_; }
  double last_recalc_time() const { return last_recalc_; }
  bool change_requires_immediate_recalc(double now) const {
    return now - last_recalc_ >= interval_;
  }
  void mark_recalc(double now) {
    last_recalc_ = now;
    dirty_ = false;
  }
  void mark_dirty() { dirty_ = true; }
  bool dirty() const { return dirty_; }

 private:
  struct Status {
    bool active = false;
    int observing = -1;
    double outbound = 0;
  };
  void add_to_subset(int layer, double outbound);
  void remove_from_subset(int layer, double outbound);

  std::shared_ptr<const LayerGraph> graph_;
  double interval_ = 15.0;
  double player_start_ = 30.0;
  double last_recalc_ = -1e18;
  bool dirty_ = false;
  int active_ = 0;
  std::vector<Status> status_;
  std::vector<int> subset_count_;   // per layer
  std::vector<double> subset_out_;  // per layer
  std::vector<int> demand_;         // per layer, aggregated over closures
};

}  // namespace mvp2p
