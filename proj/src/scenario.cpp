#include "mvp2p/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mvp2p {

using nlohmann::json;

std::string to_string(Strategy s) { return s == Strategy::Mvp2p ? "MVP2P" : "SRT"; }

Strategy parse_strategy(const std::string& s) {
  if (s == "MVP2P" || s == "mvp2p") return Strategy::Mvp2p;
  if (s == "SRT" || s == "srt") return Strategy::Srt;
  throw ConfigError("unknown strategy '" + s + "' (expected MVP2P or SRT)");
}

ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), std::filesystem::path(path).parent_path().string());
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario config is not valid JSON: ") + e.what());
  }

  ScenarioConfig c;
  try {
    if (doc.contains("layer_spec")) {
      std::filesystem::path p = doc.at("layer_spec").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
      c.layer_spec_path = p.string();
    }
    c.peer_count = doc.value("peer_count", c.peer_count);
    c.inbound_bps = doc.value("inbound_bps", c.inbound_bps);
    if (doc.contains("inbound_histogram")) {
      for (const auto& b : doc.at("inbound_histogram")) {
        c.inbound_histogram.push_back({b.at("bps").get<double>(), b.at("fraction").get<double>()});
      }
    }
    c.outbound_ratio = doc.value("outbound_ratio", c.outbound_ratio);
    c.free_rider_fraction = doc.value("free_rider_fraction", c.free_rider_fraction);
    if (doc.contains("strategy")) c.strategy = parse_strategy(doc.at("strategy").get<std::string>());
    c.seed = doc.value("seed", c.seed);
    c.horizon_s = doc.value("horizon_s", c.horizon_s);
    if (doc.contains("join_window_s")) {
      auto w = doc.at("join_window_s");
      c.join_window_start_s = w.at(0).get<double>();
      c.join_window_end_s = w.at(1).get<double>();
    }
    c.startup_delay_s = doc.value("startup_delay_s", c.startup_delay_s);
    c.urgent_range_s = doc.value("urgent_range_s", c.urgent_range_s);
    c.switch_delay_s = doc.value("switch_delay_s", c.switch_delay_s);
    c.switch_rate_per_min = doc.value("switch_rate_per_min", c.switch_rate_per_min);
    c.departure_fraction = doc.value("departure_fraction", c.departure_fraction);
    if (doc.contains("recalc_interval_s")) {
      if (doc.at("recalc_interval_s").is_string()) {
        if (doc.at("recalc_interval_s").get<std::string>() != "auto") {
          throw ConfigError("recalc_interval_s must be a number or \"auto\"");
        }
        c.recalc_auto = true;
      } else {
        c.recalc_interval_s = doc.at("recalc_interval_s").get<double>();
      }
    }
    c.neighbor_count = doc.value("neighbor_count", c.neighbor_count);
    if (doc.contains("server_bandwidth_bps")) {
      if (doc.at("server_bandwidth_bps").is_string()) {
        if (doc.at("server_bandwidth_bps").get<std::string>() != "unlimited") {
          throw ConfigError("server_bandwidth_bps must be a number or \"unlimited\"");
        }
        c.server_bandwidth_bps = std::numeric_limits<double>::infinity();
      } else {
        c.server_bandwidth_bps = doc.at("server_bandwidth_bps").get<double>();
      }
    }
    c.queue_tick_s = doc.value("queue_tick_s", c.queue_tick_s);
    c.request_pipeline_s = doc.value("request_pipeline_s", c.request_pipeline_s);
    c.max_rtt_s = doc.value("max_rtt_s", c.max_rtt_s);
    c.srt_unchoke_slots = doc.value("srt_unchoke_slots", c.srt_unchoke_slots);
    c.srt_optimistic_slots = doc.value("srt_optimistic_slots", c.srt_optimistic_slots);
    c.srt_unchoke_period_s = doc.value("srt_unchoke_period_s", c.srt_unchoke_period_s);
    c.srt_optimistic_period_s = doc.value("srt_optimistic_period_s", c.srt_optimistic_period_s);
    c.srt_ledger_window_s = doc.value("srt_ledger_window_s", c.srt_ledger_window_s);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad scenario config: ") + e.what());
  }
  c.validate();
  return c;
}

void ScenarioConfig::validate() const {
  if (layer_spec_path.empty() && !graph) throw ConfigError("scenario needs a layer_spec");
  if (peer_count < 0) throw ConfigError("peer_count must be >= 0");
  if (!inbound_histogram.empty()) {
    double total = 0;
    for (const auto& b : inbound_histogram) {
      if (b.inbound_bps <= 0 || b.fraction < 0) throw ConfigError("bad inbound histogram bucket");
      total += b.fraction;
    }
    if (std::abs(total - 1.0) > 1e-6) throw ConfigError("inbound histogram fractions must sum to 1");
  } else if (inbound_bps <= 0) {
    throw ConfigError("inbound_bps must be positive");
  }
  if (outbound_ratio < 0) throw ConfigError("outbound_ratio must be >= 0");
  if (free_rider_fraction < 0 || free_rider_fraction > 1) {
    throw ConfigError("free_rider_fraction must be in [0, 1]");
  }
  if (horizon_s <= 0) throw ConfigError("horizon_s must be positive");
  if (join_window_start_s < 0 || join_window_end_s < join_window_start_s ||
      join_window_end_s > horizon_s) {
    throw ConfigError("join window must fit in [0, horizon]");
  }
  if (startup_delay_s < 0 || urgent_range_s <= 0 || switch_delay_s <= 0) {
    throw ConfigError("delays must be positive");
  }
  if (switch_rate_per_min < 0 || departure_fraction < 0 || departure_fraction > 1) {
    throw ConfigError("bad switch rate or departure fraction");
  }
  if (recalc_interval_s <= 0) throw ConfigError("recalc_interval_s must be positive");
  if (neighbor_count < 0) throw ConfigError("neighbor_count must be >= 0");
  if (queue_tick_s <= 0 || request_pipeline_s <= 0 || max_rtt_s <= 0) {
    throw ConfigError("ticks and rtt must be positive");
  }
}

std::shared_ptr<const LayerGraph> ScenarioConfig::load_graph() const {
  if (graph) return graph;
  return std::make_shared<LayerGraph>(LayerGraph::from_spec_file(layer_spec_path));
}

}  // namespace mvp2p
