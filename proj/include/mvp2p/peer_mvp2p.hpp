#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mvp2p/layer_model.hpp"
#include "mvp2p/rng.hpp"
#include "mvp2p/sliding_window.hpp"

namespace mvp2p {

/// Dense-index chunk reference used inside the scheduler hot paths.
struct ChunkRef {
  int layer = -1;  // dense layer index
  int index = -1;

  bool valid() const { return layer >= 0; }
  auto operator<=>(const ChunkRef&) const = default;
};

/// Earliest-deadline missing chunk across the active layers, layer-DON
/// tie-break. Candidates are clipped to [lo, hi] and each layer's needed
/// range. Returns an invalid ref when nothing is missing.
ChunkRef sequential_next(const SlidingWindows& windows, const LayerGraph& graph, int lo, int hi);

/// Share of inbound bandwidth needed for plain playback (clamped to 1).
double playback_fraction(double required_rate_bps, double inbound_bps);

/// Balanced scheduling: with probability `p` delegate to sequential_next;
/// otherwise sample a contribution layer from `proportions` (layer index ->
/// fraction, cumulative sampling in index order) and take its rarest
/// eligible missing chunk in [lo, hi], smallest index on rarity ties. Falls
/// back to sequential_next when the sampled layer has no candidate or
/// proportions are empty. `eligible` lets callers exclude chunks that are
/// momentarily pointless to request (e.g. freshly refused by the server).
template <typename RarityFn, typename EligibleFn>
ChunkRef balanced_next(const SlidingWindows& windows, const LayerGraph& graph,
                       const std::vector<std::pair<int, double>>& proportions, double p, int lo,
                       int hi, RarityFn&& rarity, EligibleFn&& eligible, Rng& rng) {
  if (proportions.empty() || rng.uniform() < p) return sequential_next(windows, graph, lo, hi);

  double draw = rng.uniform();
  double acc = 0.0;
  int chosen = proportions.back().first;
  for (const auto& [layer, frac] : proportions) {
    acc += frac;
    if (draw < acc) {
      chosen = layer;
      break;
    }
  }

  ChunkRef best;
  int best_rarity = INT_MAX;
  if (windows.layer_active(chosen)) {
    int from = std::max(lo, windows.first_needed(chosen));
    int to = std::min(hi, windows.last_needed(chosen));
    for (int i = from; i <= to; ++i) {
      if (windows.slot(chosen, i) != Slot::Missing || !eligible(chosen, i)) continue;
      int r = rarity(chosen, i);
      if (r < best_rarity) {
        best_rarity = r;
        best = ChunkRef{chosen, i};
      }
    }
  }
  if (!best.valid()) return sequential_next(windows, graph, lo, hi);
  return best;
}

/// Eq-style slack for an emergent chunk: J = (deadline - now) - T_s - T_p
/// where T_s = rtt + max(C/I, C/O_server) and T_p = rtt. Negative J mandates
/// a direct server request.
double deadline_slack(double deadline_minus_now, double rtt_s, double chunk_bits,
                      double inbound_bps, double server_outbound_bps);

/// The requester's bandwidth earmarked for re-supplying the chunk's layer.
double capability(double requester_outbound_bps, double rho);

/// A neighbour that holds the wanted chunk and is believed able to send.
struct SupplierCandidate {
  int peer = -1;
  int subset_layer = -1;  // dense index of the subset the holder belongs to
};

/// Pure maximum-flow peer selection: sample a subset from `selection`
/// (subset layer index -> fraction), then pick uniformly among the sampled
/// subset's candidates. Returns nullopt when the sampled subset has no
/// available holder or `selection` is empty.
std::optional<int> select_supplier_pure(const std::vector<std::pair<int, double>>& selection,
                                        const std::vector<SupplierCandidate>& holders, Rng& rng);

constexpr int kServerTarget = -1;

/// Partial maximum-flow peer selection for emergent chunks. J < 0 forces the
/// server; otherwise: pure strategy, then uniform over model-designated
/// subsets, then uniform over all holders, then the server.
int select_supplier_partial(double j_slack, const std::vector<std::pair<int, double>>& selection,
                            const std::vector<SupplierCandidate>& holders, Rng& rng);

/// One queued upload request as seen by a supplying peer or server.
struct SupplierRequest {
  int requester = -1;
  int layer = -1;
  int index = -1;
  bool emergent = false;
  bool deadline_forced = false;  // J < 0 at request time
  double capability = 0.0;
  int rarity = 0;                // copies the supplier has observed
  std::uint64_t seq = 0;         // arrival order
};

/// Service order: capability descending, rarity ascending, arrival order.
void sort_supplier_queue(std::vector<SupplierRequest>& queue);

/// Server-side verdict for a non-deadline-forced request (Deadline-forced
/// requests are always sent and never pass through here).
bool server_grants(int copies_sent, int copies_quota, bool requester_will_supply);

}  // namespace mvp2p
