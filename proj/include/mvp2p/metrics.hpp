#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mvp2p {

/// Bandwidth-consumption counters. S = bits delivered by servers, U = bits
/// delivered to peers from all sources; windowed fields restrict both to the
/// analysis window (after every peer has joined).
struct Metrics {
  double window_start_s = 0;
  double window_end_s = 0;

  double server_bits = 0;          // S over the analysis window
  double total_bits = 0;           // U over the analysis window
  double server_bits_all = 0;      // S over the whole run
  double total_bits_all = 0;       // U over the whole run
  std::vector<double> per_layer_server_bits;  // windowed, indexed by layer

  std::int64_t missed_deadlines = 0;
  std::int64_t capacity_violations = 0;  // deadline-forced sends beyond server capacity

  /// Maximum-flow bound on the server share for the end-of-run population
  /// (the surviving peers with their final observing layers). 0 if empty.
  double optimal_share = 0;

  std::vector<double> startup_times;  // join -> playback start
  std::vector<double> switch_times;   // switch -> new layers buffered

  struct Sample {
    double t = 0;
    double server_bits = 0;  // cumulative, windowed
    double total_bits = 0;
    std::int64_t missed = 0;
  };
  std::vector<Sample> samples;

  double window_duration() const { return window_end_s - window_start_s; }
  double server_bps() const {
    return window_duration() > 0 ? server_bits / window_duration() : 0.0;
  }
  double total_bps() const {
    return window_duration() > 0 ? total_bits / window_duration() : 0.0;
  }

  bool operator==(const Metrics&) const = default;
};

/// Server share of serving bandwidth, S / U, over the analysis window.
/// Throws std::invalid_argument when U is zero.
double compute_ps(const Metrics& m);

/// Writes the per-second sample series plus per-layer totals as CSV.
void write_metrics_csv(const Metrics& m, const std::vector<std::string>& layer_names,
                       const std::string& path);

}  // namespace mvp2p
