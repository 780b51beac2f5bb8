#include "mvp2p/sliding_window.hpp"

#include <algorithm>

namespace mvp2p {

SlidingWindows::SlidingWindows(int n_layers, int n_chunks)
    : n_chunks_(n_chunks),
      state_(n_layers),
      first_(n_layers, INT_MAX),
      last_(n_layers, -1) {}

void SlidingWindows::activate_layer(int layer, int from_index) {
  if (state_[layer].empty()) state_[layer].assign(n_chunks_, 0);
  if (!layer_active(layer) || last_[layer] < from_index) {
    // fresh activation, or reopening a layer dropped earlier: the gap between
    // the old range and from_index is never needed for playback
    first_[layer] = from_index;
  } else {
    first_[layer] = std::min(first_[layer], from_index);
  }
  last_[layer] = n_chunks_ - 1;
}

void SlidingWindows::deactivate_layer(int layer, int last_index) {
  if (!layer_active(layer)) return;
  last_[layer] = std::min(last_[layer], last_index);
  if (last_[layer] < first_[layer]) reset_layer(layer);
}

void SlidingWindows::reset_layer(int layer) {
  first_[layer] = INT_MAX;
  last_[layer] = -1;
}

int SlidingWindows::first_with_state(int layer, int lo, int hi, Slot s) const {
  if (!layer_active(layer)) return -1;
  lo = std::max(lo, first_[layer]);
  hi = std::min({hi, last_[layer], n_chunks_ - 1});
  const auto& st = state_[layer];
  for (int i = lo; i <= hi; ++i) {
    if (st[i] == static_cast<std::uint8_t>(s)) return i;
  }
  return -1;
}

int SlidingWindows::first_missing(int layer, int lo, int hi) const {
  return first_with_state(layer, lo, hi, Slot::Missing);
}

bool SlidingWindows::range_received(int layer, int lo, int hi) const {
  if (!layer_active(layer)) return true;
  lo = std::max(lo, first_[layer]);
  hi = std::min({hi, last_[layer], n_chunks_ - 1});
  const auto& st = state_[layer];
  for (int i = lo; i <= hi; ++i) {
    if (st[i] != static_cast<std::uint8_t>(Slot::Received)) return false;
  }
  return true;
}

}  // namespace mvp2p
