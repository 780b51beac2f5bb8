#include "mvp2p/sim_engine.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <bit>
#include <cassert>
#include <cmath>
#include <limits>
#include <queue>

#include "mvp2p/baseline_srt.hpp"
#include "mvp2p/rng.hpp"
#include "mvp2p/sliding_window.hpp"

namespace mvp2p {

double AllocationTables::supply_share(int subset, int layer) const {
  if (subset < 0 || subset >= static_cast<int>(supply.size())) return 0.0;
  for (const auto& [l, rho] : supply[subset]) {
    if (l == layer) return rho;
  }
  return 0.0;
}

namespace {

enum class EventKind : std::uint8_t {
  PeerJoin,
  PeerDepart,
  LayerSwitch,
  ChunkCreated,
  RequestArrival,
  ResponseArrival,
  TransferBegin,
  TransferProbe,
  QueueTick,
  RecalcTick,
  PlayerTick,
  MetricsSample,
  HaveAnnounce,
  BitfieldExchange,
  TablesPublish,
};

struct Event {
  double t = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::MetricsSample;
  int a = 0, b = 0, c = 0, d = 0;
};

struct EventLater {
  bool operator()(const Event& x, const Event& y) const {
    if (x.t != y.t) return x.t > y.t;
    return x.seq > y.seq;
  }
};

struct RequestMsg {
  int requester = -1;
  int layer = -1;
  int index = -1;
  bool emergent = false;
  bool deadline_forced = false;
  double capability = 0.0;
};

struct OutRequest {
  int layer = -1;
  int index = -1;
  int target = -1;
  double bits = 0;
  bool emergent = false;
  bool rescue = false;
  double born = 0;
};

struct Transfer {
  int from = -1, to = -1;
  int layer = -1, index = -1;
  double size = 0;
  double remaining = 0;
  double rate = 0;
  double last_update = 0;
  double eta = 0;
  std::uint32_t gen = 0;
  bool latent = false;  // still in the link-delay phase
  bool in_use = false;
};

constexpr int kNone = -1;

struct Node {
  // identity and lifecycle
  int id = -1;
  bool is_server = false;
  bool active = false;
  double inbound = 0;
  double outbound = 0;  // infinity for an unlimited server

  // receiver-side streaming state
  int observing = kNone;
  int switch_target = kNone;        // >= 0 during the switch-buffering stage
  std::uint64_t required_mask = 0;  // closure of the layer being (re)acquired
  std::uint64_t switch_added = 0;   // layers added by the pending switch
  double join_time = 0;
  double switch_end = -1;
  double switch_started = -1;
  int switch_first = 0;
  int start_index = 0;
  bool in_startup = false;
  bool playing = false;
  double play_epoch = 0;  // deadline(idx) = play_epoch + idx

  SlidingWindows windows;
  double outstanding_bits = 0;
  std::vector<OutRequest> out;

  // knowledge about neighbours
  std::vector<int> nbrs;                           // from the topology, fixed
  std::vector<std::vector<std::uint64_t>> nbr_have;  // [nbr slot][layer*wpl + w]
  std::vector<double> nbr_busy_until;              // per nbr slot
  std::vector<std::vector<std::uint16_t>> rarity;  // copies among neighbours
  std::vector<std::vector<float>> retry_after;     // per-chunk cooldown after a refusal
  std::vector<std::vector<std::uint8_t>> probe_fails;  // consecutive server refusals, no copies
  std::shared_ptr<const AllocationTables> tables;

  // supplier-side state
  std::vector<SupplierRequest> queue;
  double committed_bps = 0;
  std::vector<std::vector<std::uint16_t>> sent_copies;
  std::vector<int> uploads;    // transfer ids, fluid phase
  std::vector<int> downloads;  // transfer ids, fluid phase
  std::vector<int> latent_in;  // granted transfers still in the link-delay phase

  // tit-for-tat
  TitForTatLedger ledger;
  std::vector<int> server_unchoke;  // server only, SRT
  std::uint64_t ticks = 0;

  int nbr_slot(int peer) const {
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      if (nbrs[i] == peer) return static_cast<int>(i);
    }
    return -1;
  }
};

struct ScheduledJoin {
  double t;
  int peer;
  int layer;
};
struct ScheduledSwitch {
  double t;
  int peer;
  int layer;
};

}  // namespace

struct Simulation::Impl {
  ScenarioConfig cfg;
  std::shared_ptr<const LayerGraph> graphp;
  const LayerGraph* g = nullptr;
  Topology topo;
  SimObserver* obs = nullptr;

  int n_layers = 0;
  int n_chunks = 0;
  int wpl = 0;  // bitset words per layer
  int server = 0;
  std::vector<double> chunk_bits;  // per layer

  std::vector<Node> nodes;  // peers then the server
  TrackerState tracker;
  std::vector<std::shared_ptr<const AllocationTables>> published;
  bool recalc_scheduled = false;

  std::priority_queue<Event, std::vector<Event>, EventLater> events;
  std::uint64_t seq = 0;
  double now = 0;
  int live_edge = -1;  // newest created chunk index

  std::vector<RequestMsg> msg_pool;
  std::vector<int> msg_free;
  std::vector<Transfer> transfers;
  std::vector<int> transfer_free;

  Rng run_rng{0};
  std::uint64_t request_seq = 0;

  Metrics metrics;
  double window_start = 0;

  struct DebugCounters {
    long req_peer = 0, req_server_forced = 0, req_server_fallback = 0;
    long peer_grant = 0, peer_refuse = 0;
    long server_grant_quota = 0, server_refuse = 0, server_forced = 0;
    long pure_hit = 0, pure_miss = 0;
    long pump_budget_full = 0, pump_no_chunk = 0;
    long seq_pick = 0, flow_pick = 0;
    long dup_delivery = 0;
    long rescue_no_holder = 0, rescue_with_holder = 0, early_deliver = 0, wave_deliver = 0;
    long age_hist[14] = {0};       // delivery age = now - chunk creation, 2 s buckets
    long rescue_age_hist[14] = {0};
  } dbg;

  explicit Impl(ScenarioConfig c) : cfg(std::move(c)) {
    cfg.validate();
    graphp = cfg.load_graph();
    g = graphp.get();
    n_layers = g->layer_count();
    n_chunks = static_cast<int>(cfg.horizon_s) + 1;
    wpl = (n_chunks + 63) / 64;
    chunk_bits.resize(n_layers);
    for (int l = 0; l < n_layers; ++l) {
      chunk_bits[l] = static_cast<double>(g->bitrate_by_index(l));
    }
    tracker = TrackerState(graphp, cfg.effective_recalc_interval(), cfg.join_window_start_s);
    metrics.per_layer_server_bits.assign(n_layers, 0.0);
    run_rng = Rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  }

  // ---- scheduling helpers -------------------------------------------------

  void push(double t, EventKind k, int a = 0, int b = 0, int c = 0, int d = 0) {
    events.push(Event{t, seq++, k, a, b, c, d});
  }

  double delay(int a, int b) const { return topo.delay(a, b); }

  bool is_peer(int id) const { return id < topo.peer_count(); }

  // ---- deadline arithmetic ------------------------------------------------

  double deadline(const Node& p, int idx) const {
    if (p.playing) return p.play_epoch + idx;
    return p.join_time + cfg.startup_delay_s + (idx - p.start_index);
  }

  int exec_lo(const Node& p) const {
    if (!p.playing) return p.start_index;
    return static_cast<int>(std::floor(now - p.play_epoch + 1e-9)) + 1;
  }

  int urgent_hi(const Node& p) const {
    if (!p.playing) return p.start_index - 1;  // startup handles urgency itself
    return static_cast<int>(std::floor(now + cfg.urgent_range_s - p.play_epoch + 1e-9));
  }

  // inbound bandwidth a new download would actually get under fair sharing
  double available_inbound(const Node& p) const {
    return p.inbound / static_cast<double>(p.downloads.size() + 1);
  }

  // parallel-transfer cap keeps per-transfer rates healthy; prefetch requests
  // to peers beyond it wait in the scheduler instead of diluting everything
  int max_parallel_downloads(const Node& p) const {
    return std::max(6, static_cast<int>(std::ceil(p.inbound / 2.5e5)));
  }
  int active_downloads(const Node& p) const {
    return static_cast<int>(p.downloads.size() + p.latent_in.size());
  }

  // true when starting `extra` more downloads could push any needed in-flight
  // inbound chunk (rescue or peer transfer) past its decode deadline
  bool inbound_deadline_pressure(const Node& p, int extra) const {
    if (!p.playing && !p.in_startup) return false;
    int k = static_cast<int>(p.downloads.size()) + extra;
    for (int tid : p.downloads) {
      const Transfer& tr = transfers[tid];
      if (!p.windows.needed(tr.layer, tr.index)) continue;
      Slot sl = p.windows.slot(tr.layer, tr.index);
      if (sl == Slot::Received || sl == Slot::Expired) continue;
      double d = deadline(p, tr.index);
      if (d - now > cfg.urgent_range_s) continue;
      double eta = now + tr.remaining * k / p.inbound;
      if (eta + 0.1 >= d) return true;
    }
    return false;
  }

  // k_eff projects the receiver's concurrency while the rescue runs: current
  // transfers plus every unreceived urgent chunk that may become one
  double rescue_threshold(int layer, const Node& p, int k_eff) const {
    double share = p.inbound / static_cast<double>(std::max(1, k_eff));
    double fetch = chunk_bits[layer] / share;
    if (!cfg.server_unlimited()) fetch = std::max(fetch, chunk_bits[layer] / cfg.server_bandwidth_bps);
    return 2 * cfg.max_rtt_s + fetch + 0.5 * cfg.queue_tick_s + 0.05;
  }

  // ---- run ----------------------------------------------------------------

  Metrics run() {
    setup();
    while (!events.empty()) {
      Event ev = events.top();
      events.pop();
      if (ev.t > cfg.horizon_s + 1e-9) break;
      now = ev.t;
      dispatch(ev);
    }
    now = cfg.horizon_s;
    finalize_metrics();
    if (std::getenv("MVP2P_DEBUG")) {
      std::fprintf(stderr,
                   "[dbg] req: peer=%ld srv_forced=%ld srv_fallback=%ld | peer grant=%ld refuse=%ld"
                   " | srv quota=%ld refuse=%ld forced=%ld | pure hit=%ld miss=%ld | dup=%ld\n",
                   dbg.req_peer, dbg.req_server_forced, dbg.req_server_fallback, dbg.peer_grant,
                   dbg.peer_refuse, dbg.server_grant_quota, dbg.server_refuse, dbg.server_forced,
                   dbg.pure_hit, dbg.pure_miss, dbg.dup_delivery);
      std::fprintf(stderr, "[dbg] rescue: no_holder=%ld with_holder=%ld | deliver early=%ld wave=%ld\n",
                   dbg.rescue_no_holder, dbg.rescue_with_holder, dbg.early_deliver, dbg.wave_deliver);
      std::fprintf(stderr, "[dbg] ages: ");
      for (int b = 0; b < 14; ++b) std::fprintf(stderr, "%ld/%ld ", dbg.age_hist[b], dbg.rescue_age_hist[b]);
      std::fprintf(stderr, "\n");
    }
    return metrics;
  }

  void setup();
  void dispatch(const Event& ev);

  // handlers
  void handle_join(int peer, int layer);
  void handle_depart(int peer);
  void handle_switch(int peer, int layer);
  void handle_request_arrival(int supplier, int msg_idx);
  void handle_refusal(int requester, int layer, int index, int supplier);
  void handle_transfer_begin(int tid, std::uint32_t gen);
  void handle_transfer_probe(int tid, std::uint32_t gen);
  void handle_queue_tick(int node);
  void handle_player_tick(int peer);
  void handle_have(int receiver, int sender, int layer, int index);
  void handle_bitfield(int receiver, int sender);
  void handle_tables_publish(int peer, int version);

  // tracker / allocation
  void tracker_changed();
  void recalc();

  // requester machinery
  void pump(int peer);
  void rescue_scan(Node& p);
  bool next_request(Node& p, ChunkRef& out_chunk, bool& out_emergent, bool allow_emergent);
  void send_request(Node& p, ChunkRef c, bool emergent, bool deadline_forced, int target);
  int choose_supplier(Node& p, ChunkRef c, bool emergent, bool& deadline_forced);
  void collect_holders(Node& p, ChunkRef c, std::vector<SupplierCandidate>& out);
  double my_capability(const Node& p, int layer) const;

  // supplier machinery
  void enqueue_request(Node& sup, const RequestMsg& m);
  bool admit(const Node& sup, int layer) const {
    (void)layer;  // request at the queue head is served while bandwidth remains
    return sup.committed_bps < sup.outbound - 1e-9;
  }
  void grant(Node& sup, const RequestMsg& m, bool deadline_forced);
  void refuse(Node& sup, const RequestMsg& m);
  void process_queue_mvp2p(Node& sup);
  void process_queue_srt(Node& sup);
  void rotate_server_unchoke(Node& sup);
  int supplier_rarity(const Node& sup, int layer, int index) const {
    return sup.rarity[layer][index] + sup.sent_copies[layer][index];
  }

  // transfers
  void advance_transfer(Transfer& tr) {
    if (tr.latent) return;
    tr.remaining -= tr.rate * (now - tr.last_update);
    tr.last_update = now;
  }
  double fair_rate(const Transfer& tr) const {
    const Node& s = nodes[tr.from];
    const Node& r = nodes[tr.to];
    double up = s.outbound / static_cast<double>(s.uploads.size());
    double down = r.inbound / static_cast<double>(r.downloads.size());
    return std::min(up, down);
  }
  void retime_transfers_at(int node_id);
  void complete_transfer(int tid);
  void cancel_transfers_of(int peer);

  // receiver state updates
  void cancel_pending_sources(Node& p, int layer, int index);
  void mark_received(Node& p, int layer, int index, int from, double bits);
  void drop_out_request(Node& p, int layer, int index, int target, bool to_missing);
  void check_startup_done(Node& p);
  void check_switch_done(Node& p);
  void start_playback(Node& p);
  void announce(Node& p, int layer, int index);

  void count_delivery(int from, int to, int layer, int index, double bits);
  void finalize_metrics();

  bool trace_on = std::getenv("MVP2P_TRACE") != nullptr;
  void trace(const char* what, int layer, int index, int a, int b) {
    if (!trace_on || layer != 0 || index != 300) return;
    std::fprintf(stderr, "[trace %.3f] %s l=%d i=%d a=%d b=%d\n", now, what, layer, index, a, b);
  }
};

// ---- setup ----------------------------------------------------------------

void Simulation::Impl::setup() {
  const int n = cfg.peer_count;
  server = n;
  int eff_nbrs = n > 1 ? std::min(cfg.neighbor_count, n - 1) : 0;
  if (n >= 1) {
    topo = generate_topology(n, 1, eff_nbrs, cfg.seed);
  }

  nodes.resize(n + 1);
  Node& srv = nodes[n];
  srv.id = n;
  srv.is_server = true;
  srv.active = true;
  srv.inbound = std::numeric_limits<double>::infinity();
  srv.outbound = cfg.server_bandwidth_bps;
  srv.rarity.assign(n_layers, {});
  srv.sent_copies.assign(n_layers, std::vector<std::uint16_t>(n_chunks, 0));
  for (auto& r : srv.rarity) r.assign(n_chunks, 0);

  Rng setup_rng(cfg.seed * 0x517cc1b727220a95ULL + 1);

  // bandwidth assignment
  std::vector<double> inbound(n, cfg.inbound_bps);
  if (!cfg.inbound_histogram.empty()) {
    // largest-remainder apportionment, then a deterministic shuffle
    std::vector<int> count(cfg.inbound_histogram.size(), 0);
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (std::size_t b = 0; b < cfg.inbound_histogram.size(); ++b) {
      double exact = cfg.inbound_histogram[b].fraction * n;
      count[b] = static_cast<int>(exact);
      assigned += count[b];
      rema.emplace_back(exact - count[b], static_cast<int>(b));
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (int k = 0; k < n - assigned; ++k) count[rema[k % rema.size()].second] += 1;
    std::vector<double> pool;
    for (std::size_t b = 0; b < count.size(); ++b) {
      for (int k = 0; k < count[b]; ++k) pool.push_back(cfg.inbound_histogram[b].inbound_bps);
    }
    setup_rng.shuffle(pool);
    for (int i = 0; i < n; ++i) inbound[i] = pool[i];
  }
  std::vector<int> rider_order(n);
  for (int i = 0; i < n; ++i) rider_order[i] = i;
  setup_rng.shuffle(rider_order);
  int riders = static_cast<int>(std::floor(cfg.free_rider_fraction * n + 1e-9));

  std::vector<ScheduledJoin> joins;
  std::vector<double> depart_time(n, -1.0);
  for (int i = 0; i < n; ++i) {
    joins.push_back({setup_rng.uniform(cfg.join_window_start_s, cfg.join_window_end_s), i,
                     setup_rng.uniform_int(n_layers)});
  }
  // departures
  {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    setup_rng.shuffle(order);
    int leavers = static_cast<int>(std::floor(cfg.departure_fraction * n + 1e-9));
    for (int k = 0; k < leavers; ++k) {
      depart_time[order[k]] = setup_rng.uniform(cfg.join_window_end_s + 1.0, cfg.horizon_s);
    }
  }
  // layer switches, per peer, exponential gaps
  std::vector<ScheduledSwitch> switches;
  if (cfg.switch_rate_per_min > 0) {
    for (int i = 0; i < n; ++i) {
      double mean_gap = 60.0 / cfg.switch_rate_per_min;
      double t = std::max(joins[i].t + cfg.startup_delay_s, cfg.join_window_end_s);
      int current = joins[i].layer;
      for (;;) {
        t += setup_rng.exponential(mean_gap);
        if (t >= cfg.horizon_s - 1.0) break;
        if (depart_time[i] >= 0 && t >= depart_time[i]) break;
        int target = setup_rng.uniform_int(n_layers - 1);
        if (target >= current) ++target;  // uniform over layers != current
        switches.push_back({t, i, target});
        current = target;
      }
    }
  }

  window_start = cfg.join_window_end_s;
  for (const auto& j : joins) window_start = std::max(window_start, j.t);
  metrics.window_start_s = window_start;
  metrics.window_end_s = cfg.horizon_s;

  // peers
  for (int i = 0; i < n; ++i) {
    Node& p = nodes[i];
    p.id = i;
    p.inbound = inbound[i];
    p.outbound = inbound[i] * cfg.outbound_ratio;
    p.windows = SlidingWindows(n_layers, n_chunks);
    p.nbrs = topo.neighbors(i);
    p.nbr_have.assign(p.nbrs.size(), std::vector<std::uint64_t>(n_layers * wpl, 0));
    p.nbr_busy_until.assign(p.nbrs.size(), -1.0);
    p.rarity.assign(n_layers, std::vector<std::uint16_t>(n_chunks, 0));
    p.retry_after.assign(n_layers, std::vector<float>(n_chunks, 0.0f));
    p.probe_fails.assign(n_layers, std::vector<std::uint8_t>(n_chunks, 0));
    p.sent_copies.assign(n_layers, std::vector<std::uint16_t>(n_chunks, 0));
    p.ledger = TitForTatLedger(static_cast<int>(cfg.srt_ledger_window_s), cfg.srt_unchoke_slots,
                               cfg.srt_optimistic_slots);
  }
  for (int k = 0; k < riders; ++k) nodes[rider_order[k]].outbound = 0.0;

  // events
  for (int t = 0; t <= static_cast<int>(cfg.horizon_s); ++t) {
    push(t, EventKind::ChunkCreated);
    push(t, EventKind::MetricsSample);
  }
  for (const auto& j : joins) push(j.t, EventKind::PeerJoin, j.peer, j.layer);
  for (int i = 0; i < n; ++i) {
    if (depart_time[i] >= 0) push(depart_time[i], EventKind::PeerDepart, i);
  }
  for (const auto& s : switches) push(s.t, EventKind::LayerSwitch, s.peer, s.layer);
  push(cfg.queue_tick_s, EventKind::QueueTick, server);
}

// ---- dispatch ---------------------------------------------------------------

void Simulation::Impl::dispatch(const Event& ev) {
  switch (ev.kind) {
    case EventKind::PeerJoin:
      handle_join(ev.a, ev.b);
      break;
    case EventKind::PeerDepart:
      handle_depart(ev.a);
      break;
    case EventKind::LayerSwitch:
      handle_switch(ev.a, ev.b);
      break;
    case EventKind::ChunkCreated:
      live_edge = static_cast<int>(now + 1e-9);
      break;
    case EventKind::RequestArrival:
      handle_request_arrival(ev.a, ev.b);
      break;
    case EventKind::ResponseArrival:
      handle_refusal(ev.a, ev.b, ev.c, ev.d);
      break;
    case EventKind::TransferBegin:
      handle_transfer_begin(ev.a, static_cast<std::uint32_t>(ev.b));
      break;
    case EventKind::TransferProbe:
      handle_transfer_probe(ev.a, static_cast<std::uint32_t>(ev.b));
      break;
    case EventKind::QueueTick:
      handle_queue_tick(ev.a);
      break;
    case EventKind::RecalcTick:
      recalc_scheduled = false;
      if (tracker.dirty()) recalc();
      break;
    case EventKind::PlayerTick:
      handle_player_tick(ev.a);
      break;
    case EventKind::MetricsSample: {
      metrics.samples.push_back(
          {now, metrics.server_bits, metrics.total_bits, metrics.missed_deadlines});
      if (trace_on && (std::llround(now) % 100 == 50)) {
        double out_bits = 0, em_bits = 0, committed = 0, outbound_total = 0;
        int downloads = 0, urgent_missing = 0, behind = 0;
        for (int i = 0; i < topo.peer_count(); ++i) {
          const Node& q = nodes[i];
          if (!q.active) continue;
          out_bits += q.outstanding_bits;
          committed += q.committed_bps;
          outbound_total += q.outbound;
          downloads += static_cast<int>(q.downloads.size());
          for (const auto& o : q.out) {
            if (o.emergent) em_bits += o.bits;
          }
          if (!q.playing) continue;
          int lo = exec_lo(q), uh = std::min({urgent_hi(q), live_edge, n_chunks - 1});
          bool has_urgent = false;
          for (int l = 0; l < n_layers && !has_urgent; ++l) {
            if (q.windows.first_missing(l, lo, uh) >= 0) has_urgent = true;
          }
          if (has_urgent) ++behind, ++urgent_missing;
        }
        int stale = 0, stale_srv = 0;
        double oldest = 0;
        for (int i = 0; i < topo.peer_count(); ++i) {
          for (const auto& o : nodes[i].out) {
            if (now - o.born > 3.0) {
              ++stale;
              if (o.target == server) ++stale_srv;
            }
            oldest = std::max(oldest, now - o.born);
          }
        }
        std::fprintf(stderr, "[snap2] stale3s=%d (srv=%d) oldest=%.1fs\n", stale, stale_srv, oldest);
        std::fprintf(stderr,
                     "[snap %.0f] out=%.1fMb em=%.1fMb downloads=%d committed=%.1f/%.1fMbps urgentpeers=%d\n",
                     now, out_bits / 1e6, em_bits / 1e6, downloads, committed / 1e6,
                     outbound_total / 1e6, behind);
      }
      break;
    }
    case EventKind::HaveAnnounce:
      handle_have(ev.a, ev.b, ev.c, ev.d);
      break;
    case EventKind::BitfieldExchange:
      handle_bitfield(ev.a, ev.b);
      break;
    case EventKind::TablesPublish:
      handle_tables_publish(ev.a, ev.b);
      break;
  }
}

// ---- tracker / allocation ---------------------------------------------------

void Simulation::Impl::tracker_changed() {
  if (obs) obs->on_tracker_change(now, tracker);
  if (tracker.change_requires_immediate_recalc(now)) {
    recalc();
  } else if (!recalc_scheduled) {
    push(tracker.last_recalc_time() + tracker.recalc_interval(), EventKind::RecalcTick);
    recalc_scheduled = true;
  }
}

void Simulation::Impl::recalc() {
  auto pop = tracker.population();
  FlowNetwork net = build_flow_network(*g, pop);
  FlowSolution sol = max_flow_balanced(net);

  auto tables = std::make_shared<AllocationTables>();
  tables->version = static_cast<std::uint32_t>(published.size());
  tables->supply.assign(n_layers, {});
  tables->selection.assign(n_layers, {});
  tables->quota_bps.assign(n_layers, 0.0);
  tables->copies.assign(n_layers, 0);

  const int n_sup = static_cast<int>(net.subset_layer.size());
  std::vector<double> from_source(n_sup, 0.0);
  std::vector<double> into_sink(net.receiving_layer.size(), 0.0);
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    const auto& edge = net.edges[e];
    if (edge.from == FlowNetwork::kSource) {
      from_source[edge.to - 2] = sol.flow[e];
    } else if (edge.to == FlowNetwork::kSink) {
      into_sink[edge.from - 2 - n_sup] = sol.flow[e];
    }
  }
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    const auto& edge = net.edges[e];
    if (edge.from == FlowNetwork::kSource || edge.to == FlowNetwork::kSink) continue;
    int subset = net.subset_layer[edge.from - 2];
    int rec_slot = edge.to - 2 - n_sup;
    int layer = net.receiving_layer[rec_slot];
    if (sol.flow[e] > 0 && from_source[edge.from - 2] > 0) {
      tables->supply[subset].emplace_back(layer, sol.flow[e] / from_source[edge.from - 2]);
    }
    if (sol.flow[e] > 0 && into_sink[rec_slot] > 0) {
      tables->selection[layer].emplace_back(subset, sol.flow[e] / into_sink[rec_slot]);
    }
  }
  for (std::size_t r = 0; r < net.receiving_layer.size(); ++r) {
    int layer = net.receiving_layer[r];
    double quota = static_cast<double>(net.demand_n[r]) * chunk_bits[layer] - into_sink[r];
    tables->quota_bps[layer] = quota;
    tables->copies[layer] = server_copy_count(quota, chunk_bits[layer]);
  }

  published.push_back(tables);
  nodes[server].tables = tables;  // tracker and server are co-located
  for (int i = 0; i < topo.peer_count(); ++i) {
    if (nodes[i].active) {
      push(now + delay(server, i), EventKind::TablesPublish, i,
           static_cast<int>(tables->version));
    }
  }
  tracker.mark_recalc(now);
  if (obs) obs->on_recalc(now, net, sol, *tables);
}

void Simulation::Impl::handle_tables_publish(int peer, int version) {
  Node& p = nodes[peer];
  if (!p.active) return;
  // keep the newest version only
  if (!p.tables || p.tables->version < static_cast<std::uint32_t>(version)) {
    p.tables = published[version];
  }
}

// ---- lifecycle --------------------------------------------------------------

void Simulation::Impl::handle_join(int peer, int layer) {
  Node& p = nodes[peer];
  p.active = true;
  p.join_time = now;
  p.observing = layer;
  p.switch_target = kNone;
  p.required_mask = g->required_mask(layer);
  p.in_startup = true;
  p.playing = false;
  p.start_index = tracker.execution_index(now) + static_cast<int>(cfg.startup_delay_s);

  for (int l = 0; l < n_layers; ++l) {
    if (p.required_mask >> l & 1) p.windows.activate_layer(l, p.start_index);
  }

  tracker.peer_join(peer, layer, p.outbound);
  // join handshake delivers the current allocation tables immediately
  if (!published.empty()) p.tables = published.back();
  tracker_changed();

  for (int nb : p.nbrs) {
    if (nodes[nb].active) {
      push(now + delay(peer, nb), EventKind::BitfieldExchange, peer, nb);
    }
  }
  push(now + cfg.queue_tick_s, EventKind::QueueTick, peer);
  pump(peer);
}

void Simulation::Impl::handle_depart(int peer) {
  Node& p = nodes[peer];
  if (!p.active) return;
  p.active = false;
  tracker.peer_depart(peer);
  tracker_changed();

  cancel_transfers_of(peer);

  // refuse everything still queued here so requesters can retry elsewhere
  for (const auto& q : p.queue) {
    if (nodes[q.requester].active) {
      push(now + delay(peer, q.requester), EventKind::ResponseArrival, q.requester, q.layer,
           q.index, peer);
    }
  }
  p.queue.clear();

  // neighbours drop this peer's holdings from their view of the swarm
  for (int nb : p.nbrs) {
    Node& q = nodes[nb];
    if (!q.active) continue;
    int slot = q.nbr_slot(peer);
    if (slot < 0) continue;
    for (int l = 0; l < n_layers; ++l) {
      for (int w = 0; w < wpl; ++w) {
        std::uint64_t bits = q.nbr_have[slot][l * wpl + w];
        while (bits) {
          int bit = std::countr_zero(bits);
          bits &= bits - 1;
          q.rarity[l][w * 64 + bit] -= 1;
        }
        q.nbr_have[slot][l * wpl + w] = 0;
      }
    }
    q.ledger.forget(peer);
  }
  p.out.clear();
  p.outstanding_bits = 0;
}

void Simulation::Impl::handle_switch(int peer, int layer) {
  Node& p = nodes[peer];
  if (!p.active || layer == p.observing) return;

  std::uint64_t old_mask = g->required_mask(p.observing);
  std::uint64_t new_mask = g->required_mask(layer);

  if (!p.playing) {
    // still pre-buffering: retarget the startup instead of a timed switch
    for (int l = 0; l < n_layers; ++l) {
      if ((old_mask >> l & 1) && !(new_mask >> l & 1)) p.windows.reset_layer(l);
      if ((new_mask >> l & 1) && !(old_mask >> l & 1)) p.windows.activate_layer(l, p.start_index);
    }
    tracker.layer_switch(peer, layer);
    p.observing = layer;
    p.required_mask = new_mask;
    tracker_changed();
    pump(peer);
    return;
  }

  int first = static_cast<int>(std::ceil(now + cfg.switch_delay_s - p.play_epoch - 1e-9));
  p.switch_target = layer;
  p.switch_added = new_mask & ~old_mask;
  p.switch_end = now + cfg.switch_delay_s;
  p.switch_started = now;
  p.switch_first = first;

  for (int l = 0; l < n_layers; ++l) {
    bool was = old_mask >> l & 1;
    bool will = new_mask >> l & 1;
    if (was && !will) p.windows.deactivate_layer(l, first - 1);
    if (!was && will) p.windows.activate_layer(l, first);
  }

  tracker.layer_switch(peer, layer);
  p.observing = layer;  // subset membership moves immediately
  p.required_mask = new_mask;
  tracker_changed();
  pump(peer);
}

// ---- player -----------------------------------------------------------------

void Simulation::Impl::start_playback(Node& p) {
  p.in_startup = false;
  p.playing = true;
  p.play_epoch = now - p.start_index;
  metrics.startup_times.push_back(now - p.join_time);
  push(now + 1.0, EventKind::PlayerTick, p.id);
  pump(p.id);
}

void Simulation::Impl::handle_player_tick(int peer) {
  Node& p = nodes[peer];
  if (!p.active) return;
  int idx = static_cast<int>(std::llround(now - p.play_epoch));
  if (idx < n_chunks) {
    for (int l = 0; l < n_layers; ++l) {
      if (!p.windows.needed(l, idx)) continue;
      Slot s = p.windows.slot(l, idx);
      if (s == Slot::Received) continue;
      metrics.missed_deadlines += 1;
      if (std::getenv("MVP2P_DEBUG")) {
        double eta = -1;
        for (int tid : p.downloads) {
          if (transfers[tid].layer == l && transfers[tid].index == idx) eta = transfers[tid].eta;
        }
        bool latent = false;
        for (int tid : p.latent_in) {
          if (transfers[tid].layer == l && transfers[tid].index == idx) latent = true;
        }
        std::fprintf(stderr,
                     "[miss %.3f] peer=%d l=%d i=%d slot=%d eta=%.3f latent=%d k=%zu playing_since=%.1f\n",
                     now, p.id, l, idx, static_cast<int>(s), eta, (int)latent, p.downloads.size(),
                     now - (p.play_epoch + p.start_index));
      }
      if (s == Slot::Missing) p.windows.set_slot(l, idx, Slot::Expired);
    }
  }
  if (p.switch_target >= 0 && now >= p.switch_end - 1e-9) check_switch_done(p);
  if (now + 1.0 <= cfg.horizon_s + 1e-9) push(now + 1.0, EventKind::PlayerTick, peer);
}

void Simulation::Impl::check_startup_done(Node& p) {
  int last = std::min(p.start_index + static_cast<int>(cfg.startup_delay_s) - 1, n_chunks - 1);
  for (int l = 0; l < n_layers; ++l) {
    if (!(p.required_mask >> l & 1)) continue;
    if (!p.windows.range_received(l, p.start_index, last)) return;
  }
  start_playback(p);
}

void Simulation::Impl::check_switch_done(Node& p) {
  if (p.switch_target < 0) return;
  std::uint64_t added = p.switch_added;
  bool done = true;
  for (int l = 0; l < n_layers && done; ++l) {
    if (!(added >> l & 1)) continue;
    if (p.switch_first < n_chunks &&
        p.windows.slot(l, p.switch_first) != Slot::Received) {
      done = false;
    }
  }
  if (done) {
    if (p.switch_started >= 0) metrics.switch_times.push_back(now - p.switch_started);
    p.switch_target = kNone;
    p.switch_added = 0;
    p.switch_started = -1;
  } else if (now >= p.switch_end - 1e-9) {
    // buffering window over; remaining gaps are ordinary urgent-range work
    p.switch_target = kNone;
    p.switch_added = 0;
    p.switch_started = -1;
  }
}

// ---- knowledge --------------------------------------------------------------

void Simulation::Impl::announce(Node& p, int layer, int index) {
  trace("announce", layer, index, p.id, static_cast<int>(p.nbrs.size()));
  for (int nb : p.nbrs) {
    if (nodes[nb].active) {
      push(now + delay(p.id, nb), EventKind::HaveAnnounce, nb, p.id, layer, index);
    }
  }
}

void Simulation::Impl::handle_have(int receiver, int sender, int layer, int index) {
  Node& p = nodes[receiver];
  trace("have_arrive", layer, index, receiver, sender);
  if (!p.active || !nodes[sender].active) return;
  int slot = p.nbr_slot(sender);
  if (slot < 0) { trace("have_noslot", layer, index, receiver, sender); return; }
  std::uint64_t& word = p.nbr_have[slot][layer * wpl + index / 64];
  std::uint64_t bit = std::uint64_t{1} << (index % 64);
  if (word & bit) return;
  word |= bit;
  p.rarity[layer][index] += 1;
  trace("have_recorded", layer, index, receiver, p.rarity[layer][index]);
}

void Simulation::Impl::handle_bitfield(int receiver, int sender) {
  Node& p = nodes[receiver];
  Node& s = nodes[sender];
  if (!p.active || !s.active) return;
  int slot = p.nbr_slot(sender);
  if (slot < 0) return;
  for (int l = 0; l < n_layers; ++l) {
    for (int i = 0; i < n_chunks; ++i) {
      if (s.windows.layer_count() == 0) break;
      if (s.windows.slot(l, i) == Slot::Received) {
        std::uint64_t& word = p.nbr_have[slot][l * wpl + i / 64];
        std::uint64_t bit = std::uint64_t{1} << (i % 64);
        if (!(word & bit)) {
          word |= bit;
          p.rarity[l][i] += 1;
        }
      }
    }
  }
}

// ---- requester --------------------------------------------------------------

double Simulation::Impl::my_capability(const Node& p, int layer) const {
  if (!p.tables) return 0.0;
  int subset = p.switch_target >= 0 ? p.switch_target : p.observing;
  return capability(p.outbound, p.tables->supply_share(subset, layer));
}

void Simulation::Impl::collect_holders(Node& p, ChunkRef c, std::vector<SupplierCandidate>& out) {
  out.clear();
  for (std::size_t slot = 0; slot < p.nbrs.size(); ++slot) {
    int nb = p.nbrs[slot];
    const Node& q = nodes[nb];
    if (!q.active || p.nbr_busy_until[slot] > now) continue;
    if (p.nbr_have[slot][c.layer * wpl + c.index / 64] >> (c.index % 64) & 1) {
      int subset = q.switch_target >= 0 ? q.switch_target : q.observing;
      out.push_back({nb, subset});
    }
  }
}

void Simulation::Impl::rescue_scan(Node& p) {
  if (!p.active) return;
  int lo = exec_lo(p);
  int uhi = std::min({urgent_hi(p), live_edge, n_chunks - 1});
  int pending = active_downloads(p) + 1;
  for (int l = 0; l < n_layers; ++l) {
    if (!p.windows.layer_active(l)) continue;
    int from = std::max(lo, p.windows.first_needed(l));
    int to = std::min(uhi, p.windows.last_needed(l));
    for (int i = from; i <= to; ++i) {
      Slot sl = p.windows.slot(l, i);
      if (sl == Slot::Missing) ++pending;
    }
  }
  for (int l = 0; l < n_layers; ++l) {
    if (!p.windows.layer_active(l)) continue;
    double threshold = rescue_threshold(l, p, pending);
    int from = std::max(lo, p.windows.first_needed(l));
    int to = std::min({p.windows.last_needed(l), live_edge, n_chunks - 1});
    for (int i = from; i <= to; ++i) {
      if (deadline(p, i) - now > threshold) break;
      Slot s = p.windows.slot(l, i);
      if (s == Slot::Received || s == Slot::Expired || s == Slot::RescuePending) continue;
      {
        bool any_holder = false;
        for (std::size_t slot2 = 0; slot2 < p.nbrs.size(); ++slot2) {
          if (p.nbr_have[slot2][l * wpl + i / 64] >> (i % 64) & 1) any_holder = true;
        }
        if (any_holder) dbg.rescue_with_holder += 1; else dbg.rescue_no_holder += 1;
      }
      if (s == Slot::Requested) {
        // keep a transfer that will clearly beat the deadline, cancel the rest
        bool arriving = false;
        for (int tid : p.downloads) {
          const Transfer& tr = transfers[tid];
          if (tr.layer == l && tr.index == i &&
              tr.eta + 0.1 < deadline(p, i)) {
            arriving = true;
          }
        }
        if (arriving) continue;
        cancel_pending_sources(p, l, i);
      }
      // deadline-forced: request straight from a server
      p.windows.set_slot(l, i, Slot::RescuePending);
      ChunkRef c{l, i};
      send_request(p, c, true, true, server);
    }
  }
}

bool Simulation::Impl::next_request(Node& p, ChunkRef& out_chunk, bool& out_emergent,
                                    bool allow_emergent) {
  int hi = std::min(live_edge, n_chunks - 1);
  if (hi < 0) return false;

  if (p.in_startup) {
    ChunkRef c = sequential_next(p.windows, *g, p.start_index, hi);
    if (!c.valid()) return false;
    out_chunk = c;
    out_emergent = true;  // the whole pre-buffering stage is time-sensitive
    return true;
  }

  int lo = exec_lo(p);
  int uhi = std::min(urgent_hi(p), hi);

  if (allow_emergent) {
    ChunkRef c = sequential_next(p.windows, *g, lo, uhi);
    if (c.valid()) {
      out_chunk = c;
      out_emergent = true;
      return true;
    }
  }
  ChunkRef c;

  bool switching = p.switch_target >= 0 && now < p.switch_end;
  if (cfg.strategy == Strategy::Mvp2p) {
    double p_seq = allow_emergent ? playback_fraction(
                                        static_cast<double>(g->mask_bitrate(p.required_mask)),
                                        p.inbound)
                                  : 0.0;
    static thread_local std::vector<std::pair<int, double>> props;
    props.clear();
    if (p.tables) {
      int subset = p.switch_target >= 0 ? p.switch_target : p.observing;
      for (const auto& pr : p.tables->supply[subset]) props.push_back(pr);
    }
    // chunks with no peer copy are obtainable only from the server; they are
    // probed last so fetchable rare chunks are never shadowed by fresh ones
    auto rarity = [&](int layer, int index) {
      int r = p.rarity[layer][index];
      return r == 0 ? INT_MAX - 1 : r;
    };
    auto eligible = [&](int layer, int index) { return p.retry_after[layer][index] <= now; };
    c = balanced_next(p.windows, *g, props, p_seq, lo, hi, rarity, eligible, run_rng);
  } else {
    auto rarity = [&](int layer, int index) {
      int r = p.rarity[layer][index];
      return r == 0 ? INT_MAX - 1 : r;
    };
    auto eligible = [&](int layer, int index) { return p.retry_after[layer][index] <= now; };
    c = srt_next_chunk(p.windows, *g, lo, uhi, hi, rarity, eligible);
  }
  if (!c.valid()) return false;
  out_chunk = c;
  out_emergent = switching && (p.switch_added >> c.layer & 1);
  return true;
}

int Simulation::Impl::choose_supplier(Node& p, ChunkRef c, bool emergent, bool& deadline_forced) {
  deadline_forced = false;
  static thread_local std::vector<SupplierCandidate> holders;
  collect_holders(p, c, holders);

  if (cfg.strategy == Strategy::Mvp2p) {
    static thread_local std::vector<std::pair<int, double>> selection;
    selection.clear();
    if (p.tables) {
      for (const auto& pr : p.tables->selection[c.layer]) selection.push_back(pr);
    }
    if (emergent) {
      double j = deadline_slack(deadline(p, c.index) - now, cfg.max_rtt_s, chunk_bits[c.layer],
                                available_inbound(p), cfg.server_bandwidth_bps);
      int target = select_supplier_partial(j, selection, holders, run_rng);
      if (target == kServerTarget) {
        deadline_forced = j < 0;
        return server;
      }
      return target;
    }
    auto target = select_supplier_pure(selection, holders, run_rng);
    if (target) dbg.pure_hit += 1; else dbg.pure_miss += 1;
    return target ? *target : server;
  }

  // SRT: tit-for-tat ranking, server when nobody holds the chunk or J < 0
  if (emergent) {
    double j = deadline_slack(deadline(p, c.index) - now, cfg.max_rtt_s, chunk_bits[c.layer],
                              available_inbound(p), cfg.server_bandwidth_bps);
    if (j < 0) {
      deadline_forced = true;
      return server;
    }
  }
  static thread_local std::vector<int> ids;
  static thread_local std::vector<bool> unchokes_me;
  ids.clear();
  unchokes_me.clear();
  for (const auto& h : holders) {
    ids.push_back(h.peer);
    unchokes_me.push_back(nodes[h.peer].ledger.unchoked(p.id));
  }
  int target = srt_select_supplier(ids, unchokes_me, p.ledger, now, run_rng);
  return target == kServerTarget ? server : target;
}

void Simulation::Impl::send_request(Node& p, ChunkRef c, bool emergent, bool deadline_forced,
                                    int target) {
  if (p.windows.slot(c.layer, c.index) == Slot::Missing) {
    p.windows.set_slot(c.layer, c.index, Slot::Requested);
  }
  double bits = chunk_bits[c.layer];
  p.out.push_back({c.layer, c.index, target, bits, emergent, deadline_forced, now});
  p.outstanding_bits += bits;

  int idx;
  if (!msg_free.empty()) {
    idx = msg_free.back();
    msg_free.pop_back();
  } else {
    idx = static_cast<int>(msg_pool.size());
    msg_pool.emplace_back();
  }
  msg_pool[idx] = {p.id, c.layer, c.index, emergent, deadline_forced, my_capability(p, c.layer)};
  trace(deadline_forced ? "req_forced" : (target == server ? "req_server" : "req_peer"), c.layer,
        c.index, p.id, target);
  push(now + delay(p.id, target), EventKind::RequestArrival, target, idx);
  if (target == server) {
    if (deadline_forced) dbg.req_server_forced += 1; else dbg.req_server_fallback += 1;
  } else {
    dbg.req_peer += 1;
  }
  if (obs) obs->on_request(now, p.id, c, emergent, target);
}

void Simulation::Impl::pump(int peer) {
  Node& p = nodes[peer];
  if (!p.active) return;
  rescue_scan(p);
  double budget = p.inbound * cfg.request_pipeline_s;
  bool hold_prefetch = inbound_deadline_pressure(p, 1);
  // inbound is split per the playback fraction: the deadline-driven class
  // gets its share and can never squeeze out availability prefetch
  double p_seq = playback_fraction(static_cast<double>(g->mask_bitrate(p.required_mask)),
                                   p.inbound);
  double emergent_cap =
      p.in_startup ? budget : std::max(p_seq * budget, 2.0 * chunk_bits[0]);
  double emergent_bits = 0;
  for (const auto& o : p.out) {
    if (o.emergent && !o.rescue) emergent_bits += o.bits;
  }
  for (int guard = 0; guard < 64 && p.outstanding_bits < budget; ++guard) {
    ChunkRef c;
    bool emergent = false;
    if (!next_request(p, c, emergent, emergent_bits < emergent_cap)) break;
    if (!emergent && hold_prefetch) break;
    if (emergent) emergent_bits += chunk_bits[c.layer];
    bool deadline_forced = false;
    int target = choose_supplier(p, c, emergent, deadline_forced);
    if (trace_on && p.id == 90 && now >= 300 && now <= 315) {
      std::fprintf(stderr, "[pick %.3f] peer=90 l=%d i=%d rar=%d emergent=%d target=%d out=%.0f\n",
                   now, c.layer, c.index, (int)p.rarity[c.layer][c.index], (int)emergent, target,
                   p.outstanding_bits);
    }
    send_request(p, c, emergent, deadline_forced, target);
  }
}

// ---- supplier ---------------------------------------------------------------

void Simulation::Impl::handle_request_arrival(int supplier, int msg_idx) {
  RequestMsg m = msg_pool[msg_idx];
  msg_free.push_back(msg_idx);
  Node& sup = nodes[supplier];
  Node& req = nodes[m.requester];

  if (!req.active) return;
  if (!sup.active) {
    push(now + delay(supplier, m.requester), EventKind::ResponseArrival, m.requester, m.layer,
         m.index, supplier);
    return;
  }

  if (sup.is_server) {
    if (m.deadline_forced) {
      if (!cfg.server_unlimited() && !admit(sup, m.layer)) metrics.capacity_violations += 1;
      dbg.server_forced += 1;
      grant(sup, m, true);
    } else {
      enqueue_request(sup, m);
    }
    return;
  }

  // peers answer urgent-range (emergent) requests immediately
  if (m.emergent) {
    bool ok = admit(sup, m.layer);
    if (ok && cfg.strategy == Strategy::Srt) ok = sup.ledger.unchoked(m.requester);
    if (ok) {
      dbg.peer_grant += 1;
      grant(sup, m, false);
    } else {
      dbg.peer_refuse += 1;
      refuse(sup, m);
    }
    return;
  }
  enqueue_request(sup, m);
}

void Simulation::Impl::enqueue_request(Node& sup, const RequestMsg& m) {
  sup.queue.push_back({m.requester, m.layer, m.index, m.emergent, m.deadline_forced, m.capability,
                       supplier_rarity(sup, m.layer, m.index), request_seq++});
}

void Simulation::Impl::grant(Node& sup, const RequestMsg& m, bool /*forced*/) {
  trace("grant", m.layer, m.index, sup.id, m.requester);
  assert(sup.is_server || sup.windows.slot(m.layer, m.index) == Slot::Received);
  sup.committed_bps += chunk_bits[m.layer];
  sup.sent_copies[m.layer][m.index] += 1;

  int tid;
  if (!transfer_free.empty()) {
    tid = transfer_free.back();
    transfer_free.pop_back();
  } else {
    tid = static_cast<int>(transfers.size());
    transfers.emplace_back();
  }
  Transfer& tr = transfers[tid];
  std::uint32_t gen = tr.gen + 1;  // keep generations unique across pool reuse
  tr = Transfer{};
  tr.gen = gen;
  tr.in_use = true;
  tr.latent = true;
  tr.from = sup.id;
  tr.to = m.requester;
  tr.layer = m.layer;
  tr.index = m.index;
  tr.size = chunk_bits[m.layer];
  tr.remaining = tr.size;
  nodes[m.requester].latent_in.push_back(tid);
  push(now + delay(sup.id, m.requester), EventKind::TransferBegin, tid,
       static_cast<int>(tr.gen));
}

void Simulation::Impl::refuse(Node& sup, const RequestMsg& m) {
  trace("refuse", m.layer, m.index, sup.id, m.requester);
  push(now + delay(sup.id, m.requester), EventKind::ResponseArrival, m.requester, m.layer,
       m.index, sup.id);
}

void Simulation::Impl::process_queue_mvp2p(Node& sup) {
  if (sup.queue.empty()) return;
  auto queue = std::move(sup.queue);
  sup.queue.clear();
  sort_supplier_queue(queue);
  for (const auto& q : queue) {
    if (!nodes[q.requester].active) continue;
    RequestMsg m{q.requester, q.layer, q.index, q.emergent, q.deadline_forced, q.capability};
    if (sup.is_server) {
      int sent = sup.sent_copies[q.layer][q.index];
      bool will_supply = q.capability > 0;
      if (sup.tables && server_grants(sent, sup.tables->copies[q.layer], will_supply) &&
          admit(sup, q.layer)) {
        dbg.server_grant_quota += 1;
        grant(sup, m, false);
      } else {
        dbg.server_refuse += 1;
        refuse(sup, m);
      }
    } else {
      if (admit(sup, q.layer)) {
        dbg.peer_grant += 1;
        grant(sup, m, false);
      } else {
        dbg.peer_refuse += 1;
        refuse(sup, m);
      }
    }
  }
}

void Simulation::Impl::process_queue_srt(Node& sup) {
  if (sup.queue.empty()) return;
  auto queue = std::move(sup.queue);
  sup.queue.clear();
  // FIFO within the unchoke set
  for (const auto& q : queue) {
    if (!nodes[q.requester].active) continue;
    RequestMsg m{q.requester, q.layer, q.index, q.emergent, q.deadline_forced, q.capability};
    bool unchoked = sup.is_server
                        ? std::binary_search(sup.server_unchoke.begin(), sup.server_unchoke.end(),
                                             q.requester)
                        : sup.ledger.unchoked(q.requester);
    if (unchoked && admit(sup, q.layer)) {
      grant(sup, m, false);
    } else {
      refuse(sup, m);
    }
  }
}

void Simulation::Impl::rotate_server_unchoke(Node& sup) {
  std::vector<int> active;
  for (int i = 0; i < topo.peer_count(); ++i) {
    if (nodes[i].active) active.push_back(i);
  }
  sup.server_unchoke.clear();
  int slots = cfg.srt_unchoke_slots + cfg.srt_optimistic_slots;
  for (int s = 0; s < slots && !active.empty(); ++s) {
    int k = run_rng.uniform_int(static_cast<int>(active.size()));
    sup.server_unchoke.push_back(active[k]);
    active.erase(active.begin() + k);
  }
  std::sort(sup.server_unchoke.begin(), sup.server_unchoke.end());
}

void Simulation::Impl::handle_queue_tick(int id) {
  Node& nd = nodes[id];
  if (!nd.active) return;
  nd.ticks += 1;

  if (cfg.strategy == Strategy::Srt) {
    int unchoke_every = std::max<int>(1, static_cast<int>(cfg.srt_unchoke_period_s / cfg.queue_tick_s));
    int optimistic_every =
        std::max<int>(1, static_cast<int>(cfg.srt_optimistic_period_s / cfg.queue_tick_s));
    if (nd.is_server) {
      if (nd.ticks % unchoke_every == 1) rotate_server_unchoke(nd);
    } else {
      if (nd.ticks % unchoke_every == 1) {
        std::vector<int> active;
        for (int nb : nd.nbrs) {
          if (nodes[nb].active) active.push_back(nb);
        }
        nd.ledger.reevaluate(active, now);
        if (nd.ticks % optimistic_every == 1 || nd.ticks == 1) {
          nd.ledger.rotate_optimistic(active, run_rng);
        }
      }
    }
    process_queue_srt(nd);
  } else {
    process_queue_mvp2p(nd);
  }

  if (!nd.is_server) pump(id);
  if (now + cfg.queue_tick_s <= cfg.horizon_s + 1e-9) {
    push(now + cfg.queue_tick_s, EventKind::QueueTick, id);
  }
}

// ---- transfers ----------------------------------------------------------------

void Simulation::Impl::retime_transfers_at(int node_id) {
  Node& nd = nodes[node_id];
  auto touch = [&](int tid) {
    Transfer& tr = transfers[tid];
    advance_transfer(tr);
    tr.rate = fair_rate(tr);
    double eta = tr.rate > 0 ? now + tr.remaining / tr.rate
                             : std::numeric_limits<double>::infinity();
    if (eta < tr.eta - 1e-12) {
      tr.eta = eta;
      tr.gen += 1;
      push(eta, EventKind::TransferProbe, tid, static_cast<int>(tr.gen));
    } else {
      tr.eta = eta;  // probe at the old (earlier or equal) time will re-arm
    }
  };
  for (int tid : nd.uploads) touch(tid);
  for (int tid : nd.downloads) touch(tid);
}

void Simulation::Impl::handle_transfer_begin(int tid, std::uint32_t gen) {
  Transfer& tr = transfers[tid];
  if (!tr.in_use || tr.gen != gen) return;
  std::erase(nodes[tr.to].latent_in, tid);
  {
    Node& r = nodes[tr.to];
    // a transfer may not begin if it would dilute a deadline-critical chunk
    // already on its way, unless its own deadline is even tighter
    bool urgent_self = r.active && r.windows.needed(tr.layer, tr.index) &&
                       deadline(r, tr.index) - now <= cfg.urgent_range_s;
    if (r.active && !urgent_self && inbound_deadline_pressure(r, 2)) {
      tr.in_use = false;
      transfer_free.push_back(tid);
      nodes[tr.from].committed_bps -= chunk_bits[tr.layer];
      if (nodes[tr.from].committed_bps < 1e-9) nodes[tr.from].committed_bps = 0;
      drop_out_request(r, tr.layer, tr.index, tr.from, true);
      return;
    }
  }
  if (!nodes[tr.from].active || !nodes[tr.to].active) {
    // an endpoint departed while the request was in flight
    tr.in_use = false;
    transfer_free.push_back(tid);
    nodes[tr.from].committed_bps -= chunk_bits[tr.layer];
    if (nodes[tr.from].committed_bps < 1e-9) nodes[tr.from].committed_bps = 0;
    if (nodes[tr.to].active) drop_out_request(nodes[tr.to], tr.layer, tr.index, tr.from, true);
    return;
  }
  tr.latent = false;
  tr.last_update = now;
  tr.eta = std::numeric_limits<double>::infinity();
  nodes[tr.from].uploads.push_back(tid);
  nodes[tr.to].downloads.push_back(tid);
  retime_transfers_at(tr.from);
  retime_transfers_at(tr.to);
}

void Simulation::Impl::handle_transfer_probe(int tid, std::uint32_t gen) {
  Transfer& tr = transfers[tid];
  if (!tr.in_use || tr.latent || tr.gen != gen) return;
  advance_transfer(tr);
  if (tr.remaining <= 1e-6) {
    complete_transfer(tid);
  } else {
    tr.rate = fair_rate(tr);
    tr.eta = tr.rate > 0 ? now + tr.remaining / tr.rate : std::numeric_limits<double>::infinity();
    tr.gen += 1;
    if (std::isfinite(tr.eta)) push(tr.eta, EventKind::TransferProbe, tid, static_cast<int>(tr.gen));
  }
}

void Simulation::Impl::complete_transfer(int tid) {
  Transfer tr = transfers[tid];
  transfers[tid].in_use = false;
  transfer_free.push_back(tid);

  std::erase(nodes[tr.from].uploads, tid);
  std::erase(nodes[tr.to].downloads, tid);
  nodes[tr.from].committed_bps -= chunk_bits[tr.layer];
  if (nodes[tr.from].committed_bps < 1e-9) nodes[tr.from].committed_bps = 0;
  retime_transfers_at(tr.from);
  retime_transfers_at(tr.to);

  Node& p = nodes[tr.to];
  if (!p.active) return;

  trace("deliver", tr.layer, tr.index, tr.from, tr.to);
  if (p.playing && deadline(p, tr.index) - now > 6.0) dbg.early_deliver += 1; else dbg.wave_deliver += 1;
  {
    int bucket = std::min(13, static_cast<int>((now - tr.index) / 2.0));
    if (bucket >= 0) {
      dbg.age_hist[bucket] += 1;
      if (nodes[tr.from].is_server) dbg.rescue_age_hist[bucket] += 1;
    }
  }
  count_delivery(tr.from, tr.to, tr.layer, tr.index, tr.size);
  if (cfg.strategy == Strategy::Srt) {
    if (!nodes[tr.from].is_server) p.ledger.on_received(tr.from, tr.size, now);
    if (!nodes[tr.from].is_server) nodes[tr.from].ledger.on_sent(tr.to, tr.size, now);
  }
  mark_received(p, tr.layer, tr.index, tr.from, tr.size);
}

void Simulation::Impl::cancel_transfers_of(int peer) {
  Node& p = nodes[peer];
  auto cancel = [&](int tid, bool inbound_side) {
    Transfer& tr = transfers[tid];
    advance_transfer(tr);
    tr.in_use = false;
    transfer_free.push_back(tid);
    nodes[tr.from].committed_bps -= chunk_bits[tr.layer];
    if (nodes[tr.from].committed_bps < 1e-9) nodes[tr.from].committed_bps = 0;
    if (inbound_side) {
      // peer was downloading from someone who still exists
      std::erase(nodes[tr.from].uploads, tid);
      retime_transfers_at(tr.from);
    } else {
      // peer was uploading; the receiver loses an in-flight chunk
      std::erase(nodes[tr.to].downloads, tid);
      Node& r = nodes[tr.to];
      if (r.active) {
        drop_out_request(r, tr.layer, tr.index, tr.from, true);
        retime_transfers_at(tr.to);
        }
    }
  };
  for (int tid : p.uploads) cancel(tid, false);
  for (int tid : p.downloads) cancel(tid, true);
  for (int tid : p.latent_in) {
    Transfer& tr = transfers[tid];
    tr.in_use = false;
    tr.gen += 1;
    transfer_free.push_back(tid);
    nodes[tr.from].committed_bps -= chunk_bits[tr.layer];
    if (nodes[tr.from].committed_bps < 1e-9) nodes[tr.from].committed_bps = 0;
  }
  p.uploads.clear();
  p.downloads.clear();
  p.latent_in.clear();
  p.committed_bps = 0;
}

// ---- receiver updates -----------------------------------------------------------

// Aborts every outstanding fetch of (layer, index) at peer p: queued requests
// are left to be refused; active transfers are torn down so the supplier's
// bandwidth frees up (the receiver is about to get the chunk elsewhere).
void Simulation::Impl::cancel_pending_sources(Node& p, int layer, int index) {
  bool touched = false;
  for (std::size_t i = p.out.size(); i-- > 0;) {
    if (p.out[i].layer != layer || p.out[i].index != index) continue;
    // withdraw a request still sitting in the supplier's queue
    auto& q = nodes[p.out[i].target].queue;
    std::erase_if(q, [&](const SupplierRequest& r) {
      return r.requester == p.id && r.layer == layer && r.index == index;
    });
    p.outstanding_bits -= p.out[i].bits;
    p.out.erase(p.out.begin() + i);
  }
  if (p.outstanding_bits < 0) p.outstanding_bits = 0;

  auto abort_transfer = [&](int tid) {
    Transfer& tr = transfers[tid];
    advance_transfer(tr);
    tr.in_use = false;
    tr.gen += 1;  // stale begin/probe events become no-ops
    transfer_free.push_back(tid);
    std::erase(nodes[tr.from].uploads, tid);
    nodes[tr.from].committed_bps -= chunk_bits[tr.layer];
    if (nodes[tr.from].committed_bps < 1e-9) nodes[tr.from].committed_bps = 0;
    retime_transfers_at(tr.from);
    touched = true;
  };
  for (std::size_t k = p.downloads.size(); k-- > 0;) {
    int tid = p.downloads[k];
    if (transfers[tid].layer != layer || transfers[tid].index != index) continue;
    p.downloads.erase(p.downloads.begin() + k);
    abort_transfer(tid);
  }
  for (std::size_t k = p.latent_in.size(); k-- > 0;) {
    int tid = p.latent_in[k];
    if (transfers[tid].layer != layer || transfers[tid].index != index) continue;
    p.latent_in.erase(p.latent_in.begin() + k);
    abort_transfer(tid);
  }
  if (touched) retime_transfers_at(p.id);
}

void Simulation::Impl::drop_out_request(Node& p, int layer, int index, int target,
                                        bool to_missing) {
  for (std::size_t i = 0; i < p.out.size(); ++i) {
    if (p.out[i].layer == layer && p.out[i].index == index && p.out[i].target == target) {
      p.outstanding_bits -= p.out[i].bits;
      p.out.erase(p.out.begin() + i);
      break;
    }
  }
  if (p.outstanding_bits < 0) p.outstanding_bits = 0;

  Slot s = p.windows.slot(layer, index);
  if (s == Slot::Received || s == Slot::Expired) return;
  bool still_pending = false;
  for (const auto& o : p.out) {
    if (o.layer == layer && o.index == index) still_pending = true;
  }
  if (still_pending) return;
  if (to_missing) {
    // past-deadline chunks are not re-requested
    bool past = p.playing && deadline(p, index) < now - 1e-9;
    p.windows.set_slot(layer, index, past ? Slot::Expired : Slot::Missing);
  }
}

void Simulation::Impl::handle_refusal(int requester, int layer, int index, int supplier) {
  Node& p = nodes[requester];
  if (!p.active) return;
  if (supplier == server && p.rarity[layer][index] == 0) {
    // nobody holds this chunk yet and the server refused: probe it at a
    // decaying rate so the pipeline flows to fetchable chunks instead
    int fails = std::min<int>(p.probe_fails[layer][index] + 1, 3);
    p.probe_fails[layer][index] = static_cast<std::uint8_t>(fails);
    p.retry_after[layer][index] = static_cast<float>(now + (1 << (fails - 1)));
  } else {
    // a short pause before re-sampling suppliers lets the request pipeline
    // reach less contended chunks first
    p.retry_after[layer][index] = static_cast<float>(now + 2 * cfg.queue_tick_s);
    if (supplier != server) {
      int slot = p.nbr_slot(supplier);
      if (slot >= 0) p.nbr_busy_until[slot] = now + cfg.queue_tick_s;
    }
  }
  drop_out_request(p, layer, index, supplier, true);
}

void Simulation::Impl::mark_received(Node& p, int layer, int index, int from, double bits) {
  (void)bits;
  // every other pending source for this chunk is now redundant
  cancel_pending_sources(p, layer, index);
  if (p.windows.slot(layer, index) == Slot::Received) {
    dbg.dup_delivery += 1;
    return;
  }
  p.windows.set_slot(layer, index, Slot::Received);
  announce(p, layer, index);
  if (p.in_startup) check_startup_done(p);
  if (p.switch_target >= 0) check_switch_done(p);
  pump(p.id);
}

// ---- metrics --------------------------------------------------------------------

void Simulation::Impl::count_delivery(int from, int to, int layer, int index, double bits) {
  bool from_server = nodes[from].is_server;
  metrics.total_bits_all += bits;
  if (from_server) metrics.server_bits_all += bits;
  if (now >= window_start) {
    metrics.total_bits += bits;
    if (from_server) {
      metrics.server_bits += bits;
      metrics.per_layer_server_bits[layer] += bits;
    }
  }
  if (obs) {
    const Node& f = nodes[from];
    int subset = f.is_server ? -1 : (f.switch_target >= 0 ? f.switch_target : f.observing);
    obs->on_deliver(now, from, subset, to, ChunkRef{layer, index}, bits);
  }
}

void Simulation::Impl::finalize_metrics() {
  metrics.window_end_s = cfg.horizon_s;
  if (tracker.active_peers() > 0) {
    metrics.optimal_share = theoretical_optimal_share(*g, tracker.population());
  }
}

// ---- public wrapper ---------------------------------------------------------------

Simulation::Simulation(ScenarioConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
Simulation::~Simulation() = default;

void Simulation::set_observer(SimObserver* obs) { impl_->obs = obs; }

Metrics Simulation::run() { return impl_->run(); }

const LayerGraph& Simulation::graph() const { return *impl_->g; }

Metrics run_scenario(const ScenarioConfig& cfg, SimObserver* obs) {
  Simulation sim(cfg);
  if (obs) sim.set_observer(obs);
  return sim.run();
}

}  // namespace mvp2p
