#pragma once

#include <optional>
#include <vector>

#include "mvp2p/peer_mvp2p.hpp"
#include "mvp2p/rng.hpp"
#include "mvp2p/sliding_window.hpp"

namespace mvp2p {

/// Rolling per-neighbour byte accounting plus the unchoke set, BitTorrent
/// style: a fixed number of reciprocation slots re-evaluated periodically by
/// recently-received bytes, plus rotating optimistic slots.
class TitForTatLedger {
 public:
  TitForTatLedger() = default;
  TitForTatLedger(int window_s, int regular_slots, int optimistic_slots);

  void on_received(int neighbor, double bits, double now);
  void on_sent(int neighbor, double bits, double now);

  double received_in_window(int neighbor, double now) const;
  double sent_in_window(int neighbor, double now) const;

  /// Recomputes the reciprocation slots from the rolling window.
  void reevaluate(const std::vector<int>& active_neighbors, double now);
  /// Rotates the optimistic slots among neighbours outside the regular set.
  void rotate_optimistic(const std::vector<int>& active_neighbors, Rng& rng);

  bool unchoked(int neighbor) const;
  const std::vector<int>& unchoke_set() const { return unchoked_; }

  void forget(int neighbor);

 private:
  struct Buckets {
    std::vector<double> bits;  // one per second of the window
    long last_second = -1;
    double add(double amount, double now, int window);
    double sum(double now, int window) const;
  };
  Buckets& recv(int neighbor);
  Buckets& sent(int neighbor);

  int window_s_ = 10;
  int regular_slots_ = 4;
  int optimistic_slots_ = 1;
  std::vector<std::pair<int, Buckets>> recv_;  // sparse by neighbor id
  std::vector<std::pair<int, Buckets>> sent_;
  std::vector<int> unchoked_;    // regular slots, sorted
  std::vector<int> optimistic_;  // optimistic slots, sorted
};

/// SRT chunk choice: sequential while the urgent range has gaps, otherwise
/// rarest-first across all required layers' usual range (ties: smaller
/// index, then lower DON).
template <typename RarityFn, typename EligibleFn>
ChunkRef srt_next_chunk(const SlidingWindows& windows, const LayerGraph& graph, int lo,
                        int urgent_hi, int hi, RarityFn&& rarity, EligibleFn&& eligible) {
  ChunkRef urgent = sequential_next(windows, graph, lo, urgent_hi);
  if (urgent.valid()) return urgent;

  ChunkRef best;
  int best_rarity = INT_MAX;
  int best_don = INT_MAX;
  for (int layer = 0; layer < windows.layer_count(); ++layer) {
    if (!windows.layer_active(layer)) continue;
    int from = std::max({lo, urgent_hi + 1, windows.first_needed(layer)});
    int to = std::min(hi, windows.last_needed(layer));
    int don = graph.don_by_index(layer);
    for (int i = from; i <= to; ++i) {
      if (windows.slot(layer, i) != Slot::Missing || !eligible(layer, i)) continue;
      int r = rarity(layer, i);
      if (r < best_rarity || (r == best_rarity && i < best.index) ||
          (r == best_rarity && i == best.index && don < best_don)) {
        best = ChunkRef{layer, i};
        best_rarity = r;
        best_don = don;
      }
    }
  }
  return best;
}

/// Tit-for-tat supplier choice. Holders that currently unchoke the requester
/// are preferred, ranked by bytes recently received from them; otherwise one
/// random holder is tried optimistically. No holder at all means the server.
int srt_select_supplier(const std::vector<int>& holders,
                        const std::vector<bool>& unchokes_me,
                        const TitForTatLedger& ledger, double now, Rng& rng);

}  // namespace mvp2p
