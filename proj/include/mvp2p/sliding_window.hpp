#pragma once

#include <climits>
#include <cstdint>
#include <vector>

#include "mvp2p/layer_model.hpp"

namespace mvp2p {

enum class Slot : std::uint8_t {
  Missing = 0,
  Requested = 1,
  Received = 2,
  Expired = 3,          // deadline passed without delivery
  RescuePending = 4,    // deadline-forced server request in flight
};

inline bool slot_requested(Slot s) { return s == Slot::Requested || s == Slot::RescuePending; }

/// Per-layer chunk windows for one peer. A layer is "active" between
/// activate_layer and deactivate_layer; slots outside [first_needed,
/// last_needed] are never requested. Chunk indices are global (one per
/// simulated second), so no physical sliding is needed.
class SlidingWindows {
 public:
  SlidingWindows() = default;
  SlidingWindows(int n_layers, int n_chunks);

  void activate_layer(int layer, int from_index);
  void deactivate_layer(int layer, int last_index);
  void reset_layer(int layer);  // forget the layer entirely

  bool layer_active(int layer) const { return first_[layer] <= last_[layer]; }
  int first_needed(int layer) const { return first_[layer]; }
  int last_needed(int layer) const { return last_[layer]; }

  Slot slot(int layer, int index) const {
    const auto& st = state_[layer];
    return st.empty() ? Slot::Missing : static_cast<Slot>(st[index]);
  }
  void set_slot(int layer, int index, Slot s) {
    if (state_[layer].empty()) state_[layer].assign(n_chunks_, 0);
    state_[layer][index] = static_cast<std::uint8_t>(s);
  }

  bool needed(int layer, int index) const {
    return index >= first_[layer] && index <= last_[layer];
  }

  /// Earliest index in [lo, hi] with the given slot state, or -1.
  int first_with_state(int layer, int lo, int hi, Slot s) const;

  /// Earliest missing chunk in [lo, hi] clipped to the layer's needed range.
  int first_missing(int layer, int lo, int hi) const;

  /// True when every needed chunk of `layer` in [lo, hi] is received.
  bool range_received(int layer, int lo, int hi) const;

  int layer_count() const { return static_cast<int>(state_.size()); }
  int chunk_count() const { return n_chunks_; }

 private:
  int n_chunks_ = 0;
  std::vector<std::vector<std::uint8_t>> state_;
  std::vector<int> first_;  // INT_MAX when inactive
  std::vector<int> last_;   // -1 when inactive
};

}  // namespace mvp2p
