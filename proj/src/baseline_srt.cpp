#include "mvp2p/baseline_srt.hpp"

#include <algorithm>
#include <cmath>

namespace mvp2p {

TitForTatLedger::TitForTatLedger(int window_s, int regular_slots, int optimistic_slots)
    : window_s_(window_s), regular_slots_(regular_slots), optimistic_slots_(optimistic_slots) {}

double TitForTatLedger::Buckets::add(double amount, double now, int window) {
  long sec = static_cast<long>(now);
  if (bits.empty()) bits.assign(window, 0.0);
  if (last_second >= 0) {
    long stale = std::min<long>(sec - last_second, window);
    for (long k = 1; k <= stale; ++k) bits[(last_second + k) % window] = 0.0;
  }
  last_second = sec;
  bits[sec % window] += amount;
  return amount;
}

double TitForTatLedger::Buckets::sum(double now, int window) const {
  if (bits.empty() || last_second < 0) return 0.0;
  long sec = static_cast<long>(now);
  if (sec - last_second >= window) return 0.0;
  double total = 0.0;
  for (long k = 0; k < window; ++k) {
    long second = sec - k;
    if (second < 0) break;
    if (second > last_second) continue;  // future buckets relative to last write
    if (last_second - second >= window) break;
    total += bits[second % window];
  }
  return total;
}

TitForTatLedger::Buckets& TitForTatLedger::recv(int neighbor) {
  for (auto& [id, b] : recv_) {
    if (id == neighbor) return b;
  }
  recv_.emplace_back(neighbor, Buckets{});
  return recv_.back().second;
}

TitForTatLedger::Buckets& TitForTatLedger::sent(int neighbor) {
  for (auto& [id, b] : sent_) {
    if (id == neighbor) return b;
  }
  sent_.emplace_back(neighbor, Buckets{});
  return sent_.back().second;
}

void TitForTatLedger::on_received(int neighbor, double bits, double now) {
  recv(neighbor).add(bits, now, window_s_);
}

void TitForTatLedger::on_sent(int neighbor, double bits, double now) {
  sent(neighbor).add(bits, now, window_s_);
}

double TitForTatLedger::received_in_window(int neighbor, double now) const {
  for (const auto& [id, b] : recv_) {
    if (id == neighbor) return b.sum(now, window_s_);
  }
  return 0.0;
}

double TitForTatLedger::sent_in_window(int neighbor, double now) const {
  for (const auto& [id, b] : sent_) {
    if (id == neighbor) return b.sum(now, window_s_);
  }
  return 0.0;
}

void TitForTatLedger::reevaluate(const std::vector<int>& active_neighbors, double now) {
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(active_neighbors.size());
  for (int n : active_neighbors) ranked.emplace_back(received_in_window(n, now), n);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  unchoked_.clear();
  for (int i = 0; i < regular_slots_ && i < static_cast<int>(ranked.size()); ++i) {
    unchoked_.push_back(ranked[i].second);
  }
  std::sort(unchoked_.begin(), unchoked_.end());
  // drop optimistic slots that were promoted or departed
  std::vector<int> keep;
  for (int n : optimistic_) {
    if (!unchoked(n) && std::find(active_neighbors.begin(), active_neighbors.end(), n) !=
                            active_neighbors.end()) {
      keep.push_back(n);
    }
  }
  optimistic_ = keep;
}

void TitForTatLedger::rotate_optimistic(const std::vector<int>& active_neighbors, Rng& rng) {
  optimistic_.clear();
  std::vector<int> pool;
  for (int n : active_neighbors) {
    if (std::find(unchoked_.begin(), unchoked_.end(), n) == unchoked_.end()) pool.push_back(n);
  }
  for (int s = 0; s < optimistic_slots_ && !pool.empty(); ++s) {
    int k = rng.uniform_int(static_cast<int>(pool.size()));
    optimistic_.push_back(pool[k]);
    pool.erase(pool.begin() + k);
  }
  std::sort(optimistic_.begin(), optimistic_.end());
}

bool TitForTatLedger::unchoked(int neighbor) const {
  return std::binary_search(unchoked_.begin(), unchoked_.end(), neighbor) ||
         std::binary_search(optimistic_.begin(), optimistic_.end(), neighbor);
}

void TitForTatLedger::forget(int neighbor) {
  std::erase_if(recv_, [&](const auto& p) { return p.first == neighbor; });
  std::erase_if(sent_, [&](const auto& p) { return p.first == neighbor; });
  std::erase(unchoked_, neighbor);
  std::erase(optimistic_, neighbor);
}

int srt_select_supplier(const std::vector<int>& holders, const std::vector<bool>& unchokes_me,
                        const TitForTatLedger& ledger, double now, Rng& rng) {
  if (holders.empty()) return kServerTarget;

  int best = -1;
  double best_recv = -1.0;
  for (std::size_t i = 0; i < holders.size(); ++i) {
    if (!unchokes_me[i]) continue;
    double r = ledger.received_in_window(holders[i], now);
    if (r > best_recv || (r == best_recv && holders[i] < best)) {
      best = holders[i];
      best_recv = r;
    }
  }
  if (best >= 0) return best;
  return holders[rng.uniform_int(static_cast<int>(holders.size()))];
}

}  // namespace mvp2p
