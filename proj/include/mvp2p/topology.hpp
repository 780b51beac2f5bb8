#pragma once

#include <cstdint>
#include <vector>

namespace mvp2p {

/// Random overlay: peers 0..n_peers-1, then servers. Servers neighbour every
/// peer. Link delays are symmetric, uniform in [10 ms, 300 ms].
class Topology {
 public:
  Topology() = default;

  int peer_count() const { return n_peers_; }
  int server_count() const { return n_servers_; }
  int node_count() const { return n_peers_ + n_servers_; }
  int server_node(int i = 0) const { return n_peers_ + i; }

  /// Peer neighbours only (servers are implicit neighbours of all peers).
  const std::vector<int>& neighbors(int peer) const { return neighbors_[peer]; }

  double delay(int a, int b) const { return delay_[a * node_count() + b]; }

  friend Topology generate_topology(int n_peers, int n_servers, int neighbor_count,
                                    std::uint64_t seed);

 private:
  int n_peers_ = 0;
  int n_servers_ = 0;
  std::vector<std::vector<int>> neighbors_;
  std::vector<double> delay_;
};

/// Deterministic for a given seed. Each peer draws random partners until its
/// degree reaches neighbor_count (the symmetric closure can push individual
/// degrees higher). Requires 0 <= neighbor_count < n_peers.
Topology generate_topology(int n_peers, int n_servers, int neighbor_count, std::uint64_t seed);

constexpr double kMinLinkDelay = 0.010;
constexpr double kMaxLinkDelay = 0.300;

}  // namespace mvp2p
