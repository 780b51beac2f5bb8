#pragma once

#include <cstdint>

#include "mvp2p/layer_model.hpp"

namespace mvp2p {

/// One second of one layer's data. Chunks of all layers with equal index
/// share a decode deadline.
struct ChunkId {
  LayerId layer;
  int index = 0;

  auto operator<=>(const ChunkId&) const = default;
};

struct Chunk {
  ChunkId id;
  std::int64_t size_bits = 0;  // bitrate * 1 s
};

inline Chunk make_chunk(const LayerGraph& graph, ChunkId id) {
  return Chunk{id, graph.bitrate_bps(id.layer)};
}

}  // namespace mvp2p
