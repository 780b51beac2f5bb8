#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvp2p/layer_model.hpp"

namespace mvp2p {

enum class Strategy { Mvp2p, Srt };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

struct BandwidthBucket {
  double inbound_bps = 0;
  double fraction = 0;
};

/// One simulation run, fully specified. Identical configs (seed included)
/// produce bit-identical metrics.
struct ScenarioConfig {
  std::string layer_spec_path;                    // resolved against the config file dir
  std::shared_ptr<const LayerGraph> graph;        // preloaded alternative to the path

  int peer_count = 100;
  double inbound_bps = 2e6;                       // homogeneous default
  std::vector<BandwidthBucket> inbound_histogram; // heterogeneous override
  double outbound_ratio = 0.4;
  double free_rider_fraction = 0.0;
  Strategy strategy = Strategy::Mvp2p;
  std::uint64_t seed = 1;

  double horizon_s = 600.0;
  double join_window_start_s = 30.0;
  double join_window_end_s = 100.0;
  double startup_delay_s = 6.0;
  double urgent_range_s = 4.0;
  double switch_delay_s = 1.0;
  double switch_rate_per_min = 0.0;
  double departure_fraction = 0.0;
  double recalc_interval_s = 15.0;
  bool recalc_auto = false;                       // interval = 60 / switch rate
  int neighbor_count = 20;
  double server_bandwidth_bps = std::numeric_limits<double>::infinity();

  double queue_tick_s = 0.2;
  double request_pipeline_s = 1.0;                // outstanding bytes <= inbound * this
  double max_rtt_s = 0.6;                         // worst-case RTT for deadline slack

  // SRT tit-for-tat knobs (BitTorrent-conventional defaults)
  int srt_unchoke_slots = 4;
  int srt_optimistic_slots = 1;
  double srt_unchoke_period_s = 10.0;
  double srt_optimistic_period_s = 30.0;
  double srt_ledger_window_s = 10.0;

  bool server_unlimited() const { return !std::isfinite(server_bandwidth_bps); }
  double effective_recalc_interval() const {
    if (recalc_auto && switch_rate_per_min > 0) return 60.0 / switch_rate_per_min;
    return recalc_interval_s;
  }

  static ScenarioConfig from_json_text(const std::string& text,
                                       const std::string& base_dir = ".");
  static ScenarioConfig from_file(const std::string& path);
  void validate() const;  // throws ConfigError

  /// Loads (or returns) the layer graph.
  std::shared_ptr<const LayerGraph> load_graph() const;
};

}  // namespace mvp2p
