#include "mvp2p/layer_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mvp2p {

using nlohmann::json;

std::string to_string(const LayerId& id) {
  return std::to_string(id.vid) + "." + std::to_string(id.tid);
}

LayerId parse_layer_id(const std::string& s) {
  auto dot = s.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= s.size()) {
    throw ConfigError("bad layer id '" + s + "', expected \"vid.tid\"");
  }
  try {
    return LayerId{std::stoi(s.substr(0, dot)), std::stoi(s.substr(dot + 1))};
  } catch (const std::exception&) {
    throw ConfigError("bad layer id '" + s + "', expected \"vid.tid\"");
  }
}

bool LayerGraph::contains(LayerId id) const {
  return std::binary_search(layers_.begin(), layers_.end(), id);
}

int LayerGraph::index_of(LayerId id) const {
  auto it = std::lower_bound(layers_.begin(), layers_.end(), id);
  if (it == layers_.end() || *it != id) {
    throw std::invalid_argument("unknown layer " + to_string(id));
  }
  return static_cast<int>(it - layers_.begin());
}

const std::vector<LayerId>& LayerGraph::deps(LayerId id) const {
  return deps_[index_of(id)];
}

std::vector<LayerId> LayerGraph::required_layers(LayerId observing) const {
  std::uint64_t mask = closure_[index_of(observing)];
  std::vector<LayerId> out;
  for (int i = 0; i < layer_count(); ++i) {
    if (mask >> i & 1) out.push_back(layers_[i]);
  }
  return out;
}

std::int64_t LayerGraph::stream_bitrate(const std::vector<LayerId>& layers) const {
  std::int64_t sum = 0;
  for (const LayerId& id : layers) sum += bitrate_[index_of(id)];
  return sum;
}

std::int64_t LayerGraph::mask_bitrate(std::uint64_t mask) const {
  std::int64_t sum = 0;
  while (mask) {
    int i = std::countr_zero(mask);
    sum += bitrate_[i];
    mask &= mask - 1;
  }
  return sum;
}

LayerGraph LayerGraph::from_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open layer spec " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_spec_text(buf.str());
}

LayerGraph LayerGraph::from_spec_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("layer spec is not valid JSON: ") + e.what());
  }

  LayerGraph g;
  g.name_ = doc.value("name", "");
  if (!doc.contains("gop_size") || !doc.contains("views") || !doc.contains("layers") ||
      !doc.contains("decode_order")) {
    throw ConfigError("layer spec needs views, gop_size, decode_order and layers sections");
  }
  g.gop_size_ = doc.at("gop_size").get<int>();
  if (g.gop_size_ < 1 || (g.gop_size_ & (g.gop_size_ - 1)) != 0) {
    throw ConfigError("gop_size must be a positive power of two");
  }
  g.max_tid_ = std::countr_zero(static_cast<unsigned>(g.gop_size_));

  std::map<int, std::string> view_type;
  int base_vid = -1;
  for (const auto& v : doc.at("views")) {
    int vid = v.at("vid").get<int>();
    std::string type = v.at("type").get<std::string>();
    if (view_type.count(vid)) throw ConfigError("duplicate view " + std::to_string(vid));
    if (type != "base" && type != "predicted" && type != "bi-predicted") {
      throw ConfigError("view type must be base, predicted or bi-predicted");
    }
    if (type == "base") {
      if (base_vid >= 0) throw ConfigError("more than one base view declared");
      base_vid = vid;
    }
    view_type[vid] = type;
  }
  if (base_vid < 0) throw ConfigError("no base view declared");

  g.decode_order_ = doc.at("decode_order").get<std::vector<int>>();
  {
    std::vector<int> sorted = g.decode_order_;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> declared;
    for (const auto& [vid, _] : view_type) declared.push_back(vid);
    if (sorted != declared) throw ConfigError("decode_order must list every declared vid once");
  }

  struct Raw {
    LayerId id;
    std::int64_t bitrate;
    std::vector<LayerId> deps;
  };
  std::vector<Raw> raw;
  for (const auto& l : doc.at("layers")) {
    Raw r;
    r.id = LayerId{l.at("vid").get<int>(), l.at("tid").get<int>()};
    if (!view_type.count(r.id.vid)) {
      throw ConfigError("layer " + to_string(r.id) + " references undeclared view");
    }
    if (r.id.tid < 0 || r.id.tid > g.max_tid_) {
      throw ConfigError("layer " + to_string(r.id) + " has tid beyond log2(gop_size)");
    }
    if (!l.contains("bitrate_bps")) {
      throw ConfigError("missing bitrate for layer " + to_string(r.id));
    }
    r.bitrate = l.at("bitrate_bps").get<std::int64_t>();
    if (r.bitrate <= 0) throw ConfigError("bitrate of layer " + to_string(r.id) + " must be > 0");
    for (const auto& d : l.at("deps")) r.deps.push_back(parse_layer_id(d.get<std::string>()));
    raw.push_back(std::move(r));
  }
  if (raw.empty()) throw ConfigError("layer spec declares no layers");
  if (raw.size() > 64) throw ConfigError("at most 64 layers are supported");

  std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (raw[i].id == raw[i - 1].id) throw ConfigError("duplicate layer " + to_string(raw[i].id));
  }

  int observed_max_tid = 0;
  for (const Raw& r : raw) {
    g.layers_.push_back(r.id);
    g.bitrate_.push_back(r.bitrate);
    g.deps_.push_back(r.deps);
    observed_max_tid = std::max(observed_max_tid, r.id.tid);
  }
  if (observed_max_tid != g.max_tid_) {
    throw ConfigError("max tid " + std::to_string(observed_max_tid) +
                      " does not match log2(gop_size) = " + std::to_string(g.max_tid_));
  }

  // The unique dependency-free layer must be tid 0 of the base view.
  int roots = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].deps.empty()) {
      ++roots;
      if (raw[i].id != LayerId{base_vid, 0}) {
        throw ConfigError("layer " + to_string(raw[i].id) + " has no deps but is not the base layer");
      }
    }
  }
  if (roots != 1) throw ConfigError("exactly one base layer with empty deps is required");

  g.finalize();
  return g;
}

void LayerGraph::finalize() {
  const int n = layer_count();

  // Closure via DFS; colour array doubles as the cycle check.
  closure_.assign(n, 0);
  std::vector<int> colour(n, 0);  // 0 white, 1 grey, 2 black
  auto dfs = [&](auto&& self, int i) -> void {
    colour[i] = 1;
    std::uint64_t mask = std::uint64_t{1} << i;
    for (const LayerId& d : deps_[i]) {
      int j = index_of(d);  // throws if a dep names an undeclared layer
      if (colour[j] == 1) {
        throw ConfigError("cycle detected through layer " + to_string(layers_[j]));
      }
      if (colour[j] == 0) self(self, j);
      mask |= closure_[j];
    }
    closure_[i] = mask;
    colour[i] = 2;
  };
  for (int i = 0; i < n; ++i) {
    if (colour[i] == 0) dfs(dfs, i);
  }

  // Drop direct edges implied by another dep's closure.
  for (int i = 0; i < n; ++i) {
    std::vector<LayerId> kept;
    for (const LayerId& d : deps_[i]) {
      int j = index_of(d);
      bool implied = false;
      for (const LayerId& other : deps_[i]) {
        if (other == d) continue;
        if (closure_[index_of(other)] >> j & 1) {
          implied = true;
          break;
        }
      }
      if (!implied && std::find(kept.begin(), kept.end(), d) == kept.end()) kept.push_back(d);
    }
    std::sort(kept.begin(), kept.end());
    deps_[i] = std::move(kept);
  }

  closure_rate_.resize(n);
  for (int i = 0; i < n; ++i) closure_rate_[i] = mask_bitrate(closure_[i]);

  // DON: sort (tid, decode-order rank of vid).
  std::vector<int> vid_rank(decode_order_.size());
  std::map<int, int> rank_of_vid;
  for (std::size_t r = 0; r < decode_order_.size(); ++r) rank_of_vid[decode_order_[r]] = static_cast<int>(r);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (layers_[a].tid != layers_[b].tid) return layers_[a].tid < layers_[b].tid;
    return rank_of_vid.at(layers_[a].vid) < rank_of_vid.at(layers_[b].vid);
  });
  don_.assign(n, 0);
  for (int r = 0; r < n; ++r) don_[order[r]] = r;
}

}  // namespace mvp2p
