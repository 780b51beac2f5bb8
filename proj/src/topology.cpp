#include "mvp2p/topology.hpp"

#include <algorithm>
#include <stdexcept>

#include "mvp2p/rng.hpp"

namespace mvp2p {

Topology generate_topology(int n_peers, int n_servers, int neighbor_count, std::uint64_t seed) {
  if (n_peers < 1) throw std::invalid_argument("need at least one peer");
  if (n_servers < 1) throw std::invalid_argument("need at least one server");
  if (neighbor_count < 0 || neighbor_count >= n_peers) {
    throw std::invalid_argument("neighbor_count must be in [0, n_peers)");
  }

  Topology t;
  t.n_peers_ = n_peers;
  t.n_servers_ = n_servers;
  t.neighbors_.resize(n_peers);

  Rng rng(seed);

  // Delays for every node pair, drawn in a fixed order so they do not depend
  // on the neighbour structure.
  const int n = t.node_count();
  t.delay_.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      double d = rng.uniform(kMinLinkDelay, kMaxLinkDelay);
      t.delay_[a * n + b] = d;
      t.delay_[b * n + a] = d;
    }
  }

  std::vector<std::vector<char>> linked(n_peers, std::vector<char>(n_peers, 0));
  for (int i = 0; i < n_peers; ++i) {
    int need = neighbor_count - static_cast<int>(t.neighbors_[i].size());
    if (need <= 0) continue;
    std::vector<int> pool;
    pool.reserve(n_peers - 1);
    for (int j = 0; j < n_peers; ++j) {
      if (j != i && !linked[i][j]) pool.push_back(j);
    }
    rng.shuffle(pool);
    for (int k = 0; k < need && k < static_cast<int>(pool.size()); ++k) {
      int j = pool[k];
      linked[i][j] = linked[j][i] = 1;
      t.neighbors_[i].push_back(j);
      t.neighbors_[j].push_back(i);
    }
  }
  for (auto& nb : t.neighbors_) std::sort(nb.begin(), nb.end());
  return t;
}

}  // namespace mvp2p
