#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvp2p {

/// Raised for malformed or inconsistent configuration input (layer specs,
/// scenario files, sweep specs, population descriptions).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One video layer: all NALUs sharing a view id and a temporal layer id.
struct LayerId {
  int vid = 0;
  int tid = 0;

  auto operator<=>(const LayerId&) const = default;
};

std::string to_string(const LayerId& id);       // "vid.tid"
LayerId parse_layer_id(const std::string& s);   // inverse of to_string

/// Immutable layer-dependency DAG with per-layer bitrates and decode order.
///
/// Layers are stored in (vid, tid) lexicographic order; the dense index of a
/// layer is its rank in that order. Dependency closures are kept as bitmasks
/// over those indices, which caps a stream at 64 layers (a typical MVC
/// encoding of 8 views at GOP 8 has 32).
class LayerGraph {
 public:
  /// Parses and validates a layer spec document (see data/ballroom.json for
  /// the shape: views, gop_size, decode_order, layers with explicit deps).
  /// Redundant transitively-implied dependency edges are accepted and
  /// removed; cycles, duplicate layers and missing bitrates are rejected.
  static LayerGraph from_spec_text(const std::string& text);
  static LayerGraph from_spec_file(const std::filesystem::path& path);

  int layer_count() const { return static_cast<int>(layers_.size()); }
  const std::vector<LayerId>& layers() const { return layers_; }

  bool contains(LayerId id) const;
  int index_of(LayerId id) const;  // throws std::invalid_argument if unknown
  LayerId layer_at(int index) const { return layers_.at(index); }

  /// Direct reference layers after normalization (transitive reduction).
  const std::vector<LayerId>& deps(LayerId id) const;

  /// Transitive dependency closure of `observing`, including itself.
  std::vector<LayerId> required_layers(LayerId observing) const;
  std::uint64_t required_mask(int layer_index) const { return closure_[layer_index]; }

  /// Decoding-order rank: lower TIDs first, same-TID layers in view decode
  /// order. A bijection onto 0..layer_count()-1.
  int don(LayerId id) const { return don_[index_of(id)]; }
  int don_by_index(int layer_index) const { return don_[layer_index]; }

  std::int64_t bitrate_bps(LayerId id) const { return bitrate_[index_of(id)]; }
  std::int64_t bitrate_by_index(int layer_index) const { return bitrate_[layer_index]; }

  /// Sum of per-layer bitrates over `layers`. Exact integer arithmetic.
  std::int64_t stream_bitrate(const std::vector<LayerId>& layers) const;
  std::int64_t mask_bitrate(std::uint64_t mask) const;
  std::int64_t closure_bitrate(int layer_index) const { return closure_rate_[layer_index]; }

  int gop_size() const { return gop_size_; }
  int max_tid() const { return max_tid_; }
  const std::vector<int>& view_decode_order() const { return decode_order_; }
  const std::string& name() const { return name_; }

 private:
  LayerGraph() = default;
  void finalize();  // closures, DON, transitive reduction; validates DAG

  std::string name_;
  int gop_size_ = 1;
  int max_tid_ = 0;
  std::vector<int> decode_order_;           // vids, base view first
  std::vector<LayerId> layers_;             // sorted by (vid, tid)
  std::vector<std::vector<LayerId>> deps_;  // normalized direct deps
  std::vector<std::int64_t> bitrate_;
  std::vector<std::uint64_t> closure_;      // bitmask incl. self
  std::vector<std::int64_t> closure_rate_;  // mask_bitrate(closure_)
  std::vector<int> don_;
};

}  // namespace mvp2p
