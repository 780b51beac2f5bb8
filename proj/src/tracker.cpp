#include "mvp2p/tracker.hpp"

#include <cmath>
#include <stdexcept>

namespace mvp2p {

TrackerState::TrackerState(std::shared_ptr<const LayerGraph> graph, double recalc_interval_s,
                           double player_start_s)
    : graph_(std::move(graph)),
      interval_(recalc_interval_s),
      player_start_(player_start_s),
      subset_count_(graph_->layer_count(), 0),
      subset_out_(graph_->layer_count(), 0.0),
      demand_(graph_->layer_count(), 0) {}

void TrackerState::add_to_subset(int layer, double outbound) {
  subset_count_[layer] += 1;
  subset_out_[layer] += outbound;
  std::uint64_t mask = graph_->required_mask(layer);
  for (int i = 0; i < graph_->layer_count(); ++i) {
    if (mask >> i & 1) demand_[i] += 1;
  }
}

void TrackerState::remove_from_subset(int layer, double outbound) {
  subset_count_[layer] -= 1;
  subset_out_[layer] -= outbound;
  if (subset_count_[layer] == 0) subset_out_[layer] = 0.0;  // cancel rounding dust
  std::uint64_t mask = graph_->required_mask(layer);
  for (int i = 0; i < graph_->layer_count(); ++i) {
    if (mask >> i & 1) demand_[i] -= 1;
  }
}

void TrackerState::peer_join(int peer, int observing_layer, double outbound_bps) {
  if (peer >= static_cast<int>(status_.size())) status_.resize(peer + 1);
  if (status_[peer].active) throw std::invalid_argument("peer already joined");
  status_[peer] = {true, observing_layer, outbound_bps};
  add_to_subset(observing_layer, outbound_bps);
  ++active_;
  mark_dirty();
}

void TrackerState::peer_depart(int peer) {
  if (!is_active(peer)) throw std::invalid_argument("departing peer unknown to tracker");
  remove_from_subset(status_[peer].observing, status_[peer].outbound);
  status_[peer].active = false;
  --active_;
  mark_dirty();
}

void TrackerState::layer_switch(int peer, int target_layer) {
  if (!is_active(peer)) throw std::invalid_argument("switching peer unknown to tracker");
  Status& s = status_[peer];
  remove_from_subset(s.observing, s.outbound);
  s.observing = target_layer;
  add_to_subset(target_layer, s.outbound);
  mark_dirty();
}

std::vector<PeerSubsetStats> TrackerState::population() const {
  std::vector<PeerSubsetStats> pop;
  pop.reserve(graph_->layer_count());
  for (int layer = 0; layer < graph_->layer_count(); ++layer) {
    pop.push_back(PeerSubsetStats::for_layer(*graph_, graph_->layer_at(layer),
                                             subset_count_[layer], subset_out_[layer]));
  }
  return pop;
}

bool TrackerState::consistent() const {
  std::vector<int> count(graph_->layer_count(), 0);
  std::vector<double> out(graph_->layer_count(), 0.0);
  std::vector<int> demand(graph_->layer_count(), 0);
  for (const Status& s : status_) {
    if (!s.active) continue;
    count[s.observing] += 1;
    out[s.observing] += s.outbound;
    std::uint64_t mask = graph_->required_mask(s.observing);
    for (int i = 0; i < graph_->layer_count(); ++i) {
      if (mask >> i & 1) demand[i] += 1;
    }
  }
  for (int i = 0; i < graph_->layer_count(); ++i) {
    if (count[i] != subset_count_[i] || demand[i] != demand_[i]) return false;
    if (std::abs(out[i] - subset_out_[i]) > 1e-6 * std::max(1.0, std::abs(out[i]))) return false;
  }
  return true;
}

int TrackerState::execution_index(double now) const {
  if (now < player_start_) return 0;
  return static_cast<int>(now - player_start_);
}

}  // namespace mvp2p
