#include "mvp2p/peer_mvp2p.hpp"

#include <algorithm>

namespace mvp2p {

ChunkRef sequential_next(const SlidingWindows& windows, const LayerGraph& graph, int lo, int hi) {
  ChunkRef best;
  int best_don = INT_MAX;
  for (int layer = 0; layer < windows.layer_count(); ++layer) {
    int upper = best.valid() ? std::min(hi, best.index) : hi;
    int idx = windows.first_missing(layer, lo, upper);
    if (idx < 0) continue;
    int don = graph.don_by_index(layer);
    if (!best.valid() || idx < best.index || (idx == best.index && don < best_don)) {
      best = ChunkRef{layer, idx};
      best_don = don;
    }
  }
  return best;
}

double playback_fraction(double required_rate_bps, double inbound_bps) {
  if (inbound_bps <= 0) throw std::invalid_argument("inbound bandwidth must be positive");
  if (required_rate_bps <= 0) return 0.0;
  return std::min(1.0, required_rate_bps / inbound_bps);
}

double deadline_slack(double deadline_minus_now, double rtt_s, double chunk_bits,
                      double inbound_bps, double server_outbound_bps) {
  double fetch = chunk_bits / inbound_bps;
  if (server_outbound_bps > 0 && std::isfinite(server_outbound_bps)) {
    fetch = std::max(fetch, chunk_bits / server_outbound_bps);
  }
  return deadline_minus_now - (rtt_s + fetch) - rtt_s;
}

double capability(double requester_outbound_bps, double rho) {
  return requester_outbound_bps * rho;
}

namespace {

std::optional<int> pick_uniform(const std::vector<const SupplierCandidate*>& pool, Rng& rng) {
  if (pool.empty()) return std::nullopt;
  return pool[rng.uniform_int(static_cast<int>(pool.size()))]->peer;
}

}  // namespace

std::optional<int> select_supplier_pure(const std::vector<std::pair<int, double>>& selection,
                                        const std::vector<SupplierCandidate>& holders, Rng& rng) {
  if (selection.empty()) return std::nullopt;
  double draw = rng.uniform();
  double acc = 0.0;
  int subset = selection.back().first;
  for (const auto& [layer, frac] : selection) {
    acc += frac;
    if (draw < acc) {
      subset = layer;
      break;
    }
  }
  std::vector<const SupplierCandidate*> pool;
  for (const auto& c : holders) {
    if (c.subset_layer == subset) pool.push_back(&c);
  }
  return pick_uniform(pool, rng);
}

int select_supplier_partial(double j_slack, const std::vector<std::pair<int, double>>& selection,
                            const std::vector<SupplierCandidate>& holders, Rng& rng) {
  if (j_slack < 0) return kServerTarget;

  if (auto peer = select_supplier_pure(selection, holders, rng)) return *peer;

  // any subset the model designates for this layer, equal probability
  std::vector<const SupplierCandidate*> pool;
  for (const auto& c : holders) {
    for (const auto& [subset, frac] : selection) {
      if (c.subset_layer == subset && frac > 0) {
        pool.push_back(&c);
        break;
      }
    }
  }
  if (auto peer = pick_uniform(pool, rng)) return *peer;

  // any holder at all
  pool.clear();
  for (const auto& c : holders) pool.push_back(&c);
  if (auto peer = pick_uniform(pool, rng)) return *peer;

  return kServerTarget;
}

void sort_supplier_queue(std::vector<SupplierRequest>& queue) {
  std::stable_sort(queue.begin(), queue.end(), [](const SupplierRequest& a, const SupplierRequest& b) {
    if (a.capability != b.capability) return a.capability > b.capability;
    if (a.rarity != b.rarity) return a.rarity < b.rarity;
    return a.seq < b.seq;
  });
}

bool server_grants(int copies_sent, int copies_quota, bool requester_will_supply) {
  return copies_sent < copies_quota && requester_will_supply;
}

}  // namespace mvp2p
