#pragma once

// Deterministic discrete-event network for PoP nodes.
//
// Time is integer milliseconds. Events fire in (time, scheduling order), so a
// run is a pure function of (SimConfig, Deployment, Scenario). Broadcast is a
// unicast fan-out; each copy is lost with probability drop_rate or delivered
// after base + U{0..jitter} ms, the link class being the receiver's.
//
// Each node is a single server: a handler that has to hash starts when the
// node is free and finishes after a sampled processing cost. A client
// dropping a block that no trusted node vouched for only reads the header and
// costs nothing.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pufchain/consensus.hpp"
#include "pufchain/random.hpp"
#include "pufchain/registry.hpp"

namespace pufchain::sim {

enum class LinkClass { wired, wireless };

inline std::string_view to_string(LinkClass c) { return c == LinkClass::wired ? "wired" : "wireless"; }

struct LinkLatency {
  std::uint64_t base_ms = 0;
  std::uint64_t jitter_ms = 0;
};

struct CostModel {
  double mean_ms = 0.0;
  double sd_ms = 0.0;
};

struct RosterEntry {
  NodeId id;
  Role role = Role::client;
  std::string hw_class;
  LinkClass link = LinkClass::wired;
};

// Default processing costs per hardware class are the per-node block-add
// times of the reference testbed; latency defaults are calibration knobs.
inline std::map<std::string, CostModel> default_processing_costs() {
  return {{"rpi1", {72.27, 18.07}}, {"rpi2", {46.5, 2.66}}, {"rpi3", {120.03, 3.44}}};
}

struct SimConfig {
  std::uint64_t seed = 1;
  LinkLatency wired{2, 4};
  LinkLatency wireless{4, 6};
  double drop_rate = 0.0;
  std::vector<RosterEntry> roster;
  std::map<std::string, CostModel> processing_cost = default_processing_costs();
  CostModel initiation_cost{4.0, 1.0};
  bool record_wire = false;  // keep the JSON of every message sent

  const RosterEntry* find(NodeId id) const {
    for (const auto& r : roster)
      if (r.id == id) return &r;
    return nullptr;
  }

  void validate() const {
    if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) throw ValidationError("drop_rate must lie in [0, 1]");
    std::size_t trusted = 0;
    std::set<NodeId> ids;
    for (const auto& r : roster) {
      if (!ids.insert(r.id).second) throw ValidationError("duplicate node id in roster: " + r.id.to_hex());
      if (r.role == Role::trusted) ++trusted;
      if (!processing_cost.contains(r.hw_class)) throw ValidationError("no processing cost for class " + r.hw_class);
    }
    if (trusted < 1) throw ValidationError("roster needs at least one trusted node");
    auto check_cost = [](const CostModel& c) {
      if (!(c.mean_ms >= 0.0) || !(c.sd_ms >= 0.0)) throw ValidationError("cost model must be non-negative");
    };
    check_cost(initiation_cost);
    for (const auto& [k, c] : processing_cost) check_cost(c);
  }
};

// Reference testbed: one trusted node, three Pi-1 class and two Pi-2 class clients.
inline std::vector<RosterEntry> reference_roster() {
  return {{DeviceId(0x02'00'00'00'00'01), Role::trusted, "rpi3", LinkClass::wireless},
          {DeviceId(0x02'00'00'00'00'02), Role::client, "rpi1", LinkClass::wired},
          {DeviceId(0x02'00'00'00'00'03), Role::client, "rpi1", LinkClass::wired},
          {DeviceId(0x02'00'00'00'00'04), Role::client, "rpi1", LinkClass::wired},
          {DeviceId(0x02'00'00'00'00'05), Role::client, "rpi2", LinkClass::wireless},
          {DeviceId(0x02'00'00'00'00'06), Role::client, "rpi2", LinkClass::wireless}};
}

struct Deployment {
  std::vector<PufDevice> devices;  // one per roster entry, same order
  Registry registry;
};

// ---- scenario ------------------------------------------------------------

struct Initiation {
  std::uint64_t t_ms = 0;
  NodeId node;
  Bytes payload;
  std::size_t challenge_index = 0;
};

enum class AdversaryKind { tamper, replay, fake_device, forge_validator };

inline std::string_view to_string(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::tamper: return "tamper";
    case AdversaryKind::replay: return "replay";
    case AdversaryKind::fake_device: return "fake-device";
    case AdversaryKind::forge_validator: return "forge-validator";
  }
  return "?";
}

enum class Stage { origin, rebroadcast };

// tamper / forge-validator act on the blocks of the targeted initiations as
// they are sent (no targets = every initiation). replay and fake-device act at
// the scheduled times. replay re-sends a block the trusted node already
// accepted (targets[k % n], or with no targets the k-th accepted so far modulo
// the count): at the origin stage to the trusted nodes, at the rebroadcast
// stage the validated copy to every client.
struct Adversary {
  AdversaryKind kind = AdversaryKind::tamper;
  std::vector<std::size_t> targets;
  std::vector<std::uint64_t> schedule;
  Stage stage = Stage::origin;        // tamper, replay: which hop is attacked
  std::optional<NodeId> claimed_id;   // fake-device: spoofed MAC; forge-validator: claimed validator
  std::uint64_t seed = 0;
};

struct Scenario {
  std::vector<Initiation> initiations;
  std::vector<Adversary> adversaries;
  std::optional<std::uint64_t> horizon_ms;
};

inline Scenario inject(const Adversary& adversary, Scenario scenario) {
  scenario.adversaries.push_back(adversary);
  return scenario;
}

// ---- results ---------------------------------------------------------------

struct LogEvent {
  std::uint64_t t_ms = 0;
  std::string kind;
  NodeId node;
  std::string block_ref;
  std::string detail;

  friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

inline std::string event_to_line(const LogEvent& e) {
  nlohmann::ordered_json j;
  j["t_ms"] = e.t_ms;
  j["kind"] = e.kind;
  j["node"] = e.node.to_hex();
  j["block_ref"] = e.block_ref;
  j["detail"] = e.detail;
  return j.dump();
}

inline std::string event_log_text(const std::vector<LogEvent>& log) {
  std::string out;
  for (const auto& e : log) {
    out += event_to_line(e);
    out += '\n';
  }
  return out;
}

struct ClientCommit {
  NodeId client;
  std::uint64_t t_cr = 0;
  std::uint64_t t_cv = 0;
};

struct TxRecord {
  std::size_t tx = 0;
  NodeId origin;
  std::uint64_t seq = 0;
  std::uint64_t t_i = 0;
  std::optional<std::uint64_t> t_sr;
  std::optional<std::uint64_t> t_sv;
  std::optional<Reason> rejected;
  std::vector<ClientCommit> commits;

  bool accepted() const { return t_sv.has_value() && !rejected.has_value(); }
};

// One handler decision on a block that needed checking.
struct Decision {
  std::uint64_t t_ms = 0;
  NodeId node;
  Role role = Role::client;
  WireBlock block;
  std::optional<AdversaryKind> adversary;
  std::optional<std::size_t> tx;
  bool accepted = false;
  std::optional<Reason> reason;
  std::size_t tags_computed = 0;
};

struct RunResult {
  std::vector<LogEvent> log;
  std::uint64_t clock_ms = 0;
  std::vector<NodeState> nodes;
  std::vector<TxRecord> transactions;
  std::vector<Decision> decisions;
  std::vector<std::string> wire_trace;
  std::size_t adversarial_messages = 0;  // adversarial copies that reached a handler

  const NodeState& node(NodeId id) const {
    for (const auto& n : nodes)
      if (n.node_id == id) return n;
    throw NotFound("no such node: " + id.to_hex());
  }
};

// ---- the simulator -----------------------------------------------------------

namespace detail {

struct Message {
  WireBlock block;
  NodeId from;
  NodeId to;
  std::optional<std::size_t> tx;
  std::optional<AdversaryKind> adversary;
};

struct InitiateEv {
  std::size_t index;
};
struct DeliverEv {
  Message msg;
};
struct AdversaryEv {
  std::size_t adversary;
  std::size_t k;
};

struct Event {
  std::uint64_t t;
  std::uint64_t order;
  std::variant<InitiateEv, DeliverEv, AdversaryEv> what;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return a.t != b.t ? a.t > b.t : a.order > b.order;
  }
};

inline void flip_bit(WireBlock& b, std::uint64_t pick, bool include_validation) {
  const std::uint64_t payload_bits = 8 * b.data.payload.size();
  std::uint64_t total = 48 + 64 + 64 + payload_bits + 256;
  if (include_validation && b.validation) total += 64 + 256;
  std::uint64_t bit = pick % total;
  if (bit < 48) {
    b.data.device_id = DeviceId(b.data.device_id.value() ^ (1ULL << bit));
    return;
  }
  bit -= 48;
  if (bit < 64) {
    b.data.seq ^= 1ULL << bit;
    return;
  }
  bit -= 64;
  if (bit < 64) {
    b.data.t_init ^= 1ULL << bit;
    return;
  }
  bit -= 64;
  if (bit < payload_bits) {
    b.data.payload[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    return;
  }
  bit -= payload_bits;
  if (bit < 256) {
    b.auth_tag.h[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    return;
  }
  bit -= 256;
  if (bit < 64) {
    b.validation->t_validated ^= 1ULL << bit;
    return;
  }
  bit -= 64;
  b.validation->tag[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
}

class Simulation {
 public:
  Simulation(const SimConfig& config, const Deployment& deployment, const Scenario& scenario)
      : config_(config), scenario_(scenario), registry_(deployment.registry) {
    config_.validate();
    validate(deployment);
    for (const auto& r : config_.roster)
      if (r.role == Role::trusted) registry_.grant_trusted(r.id);
    for (std::size_t k = 0; k < config_.roster.size(); ++k) {
      const auto& r = config_.roster[k];
      result_.nodes.emplace_back(r.id, r.role, deployment.devices[k], registry_.provision_challenges(r.id));
      index_[r.id] = k;
    }
    busy_.assign(config_.roster.size(), 0);
    latency_rng_ = rng::engine(rng::derive(config_.seed, rng::tag("latency")));
    drop_rng_ = rng::engine(rng::derive(config_.seed, rng::tag("drop")));
    cost_rng_ = rng::engine(rng::derive(config_.seed, rng::tag("cost")));
  }

  RunResult run() {
    for (std::size_t k = 0; k < scenario_.initiations.size(); ++k)
      schedule(scenario_.initiations[k].t_ms, InitiateEv{k});
    for (std::size_t a = 0; a < scenario_.adversaries.size(); ++a) {
      const auto& adv = scenario_.adversaries[a];
      if (adv.kind == AdversaryKind::replay || adv.kind == AdversaryKind::fake_device)
        for (std::size_t k = 0; k < adv.schedule.size(); ++k) schedule(adv.schedule[k], AdversaryEv{a, k});
    }
    result_.transactions.resize(scenario_.initiations.size());
    while (!queue_.empty()) {
      Event ev = queue_.top();
      queue_.pop();
      now_ = ev.t;
      std::visit([&](auto& e) { handle(e); }, ev.what);
    }
    result_.clock_ms = now_;
    return std::move(result_);
  }

 private:
  void validate(const Deployment& dep) const {
    if (dep.devices.size() != config_.roster.size()) throw ValidationError("one device per roster node required");
    for (std::size_t k = 0; k < config_.roster.size(); ++k) {
      if (dep.devices[k].id() != config_.roster[k].id)
        throw ValidationError("device order does not match roster at " + config_.roster[k].id.to_hex());
      if (!dep.registry.contains(config_.roster[k].id))
        throw ValidationError("roster node not enrolled: " + config_.roster[k].id.to_hex());
    }
    const auto& inits = scenario_.initiations;
    for (const auto& in : inits) {
      if (!config_.find(in.node)) throw ValidationError("initiation from unknown node " + in.node.to_hex());
      if (in.challenge_index >= dep.registry.pair_count(in.node))
        throw ValidationError("challenge index beyond enrolled set for " + in.node.to_hex());
      if (in.payload.size() > kMaxPayload) throw ValidationError("payload exceeds 64 KiB");
      if (scenario_.horizon_ms && in.t_ms > *scenario_.horizon_ms) throw ValidationError("initiation beyond horizon");
    }
    for (const auto& adv : scenario_.adversaries) {
      for (auto t : adv.targets)
        if (t >= inits.size()) throw ValidationError("adversary targets a missing initiation");
      for (auto t : adv.schedule)
        if (scenario_.horizon_ms && t > *scenario_.horizon_ms) throw ValidationError("adversary schedule beyond horizon");
      if ((adv.kind == AdversaryKind::replay || adv.kind == AdversaryKind::fake_device) && adv.schedule.empty())
        throw ValidationError("replay and fake-device adversaries need a schedule");
      if (adv.kind == AdversaryKind::replay && inits.empty())
        throw ValidationError("replay adversary with nothing to replay");
    }
  }

  template <typename E>
  void schedule(std::uint64_t t, E e) {
    queue_.push(Event{t, order_++, std::move(e)});
  }

  void log(std::uint64_t t, std::string kind, NodeId node, std::string ref, std::string detail) {
    result_.log.push_back(LogEvent{t, std::move(kind), node, std::move(ref), std::move(detail)});
  }

  std::uint64_t sample_cost(const CostModel& m) {
    rng::NormalStream normal(cost_rng_);
    const double v = std::round(m.mean_ms + m.sd_ms * normal.next());
    return v <= 0.0 ? 0 : static_cast<std::uint64_t>(v);
  }

  NodeState& node(NodeId id) { return result_.nodes[index_.at(id)]; }
  const RosterEntry& entry(NodeId id) const { return config_.roster[index_.at(id)]; }

  void send(const Message& m, std::uint64_t depart) {
    if (config_.record_wire) result_.wire_trace.push_back(wire_to_json(m.block).dump());
    const bool lost = rng::uniform01(drop_rng_) < config_.drop_rate;
    const auto& link = entry(m.to).link == LinkClass::wired ? config_.wired : config_.wireless;
    const std::uint64_t latency = link.base_ms + rng::below(latency_rng_, link.jitter_ms + 1);
    if (lost) {
      log(depart, "lost", m.to, to_hex(wire_digest(m.block)), describe(m, ""));
      return;
    }
    schedule(depart + latency, DeliverEv{m});
  }

  void broadcast(const WireBlock& b, NodeId from, std::optional<std::size_t> tx, std::optional<AdversaryKind> adv,
                 std::uint64_t depart) {
    for (const auto& r : config_.roster) {
      if (r.id == from) continue;
      send(Message{b, from, r.id, tx, adv}, depart);
    }
  }

  static std::string describe(const Message& m, std::string_view extra) {
    std::string d = "from=" + m.from.to_hex();
    if (m.tx) d += ";tx=" + std::to_string(*m.tx);
    if (m.adversary) d += ";adv=" + std::string(to_string(*m.adversary));
    if (!extra.empty()) {
      d += ';';
      d += extra;
    }
    return d;
  }

  bool targeted(const Adversary& adv, std::size_t tx) const {
    return adv.targets.empty() || std::find(adv.targets.begin(), adv.targets.end(), tx) != adv.targets.end();
  }

  // ---- handlers ----

  void handle(const InitiateEv& ev) {
    const auto& in = scenario_.initiations[ev.index];
    auto& origin = node(in.node);
    const auto k = index_.at(in.node);
    const std::uint64_t start = std::max(now_, busy_[k]);
    const std::uint64_t depart = start + sample_cost(config_.initiation_cost);
    busy_[k] = depart;
    WireBlock block = initiate(origin, in.payload, in.challenge_index, now_);
    auto& rec = result_.transactions[ev.index];
    rec.tx = ev.index;
    rec.origin = in.node;
    rec.seq = block.data.seq;
    rec.t_i = now_;
    log(now_, "initiate", in.node, to_hex(wire_digest(block)), "tx=" + std::to_string(ev.index));

    WireBlock outgoing = block;
    std::optional<AdversaryKind> tampered;
    for (std::size_t a = 0; a < scenario_.adversaries.size(); ++a) {
      const auto& adv = scenario_.adversaries[a];
      if (adv.kind == AdversaryKind::tamper && adv.stage == Stage::origin && targeted(adv, ev.index)) {
        flip_bit(outgoing, rng::derive(adv.seed, ev.index), false);
        tampered = AdversaryKind::tamper;
        log(depart, "inject", in.node, to_hex(wire_digest(outgoing)), "adv=tamper;tx=" + std::to_string(ev.index));
      }
    }
    broadcast(outgoing, in.node, ev.index, tampered, depart);

    for (const auto& adv : scenario_.adversaries) {
      if (adv.kind != AdversaryKind::forge_validator || !targeted(adv, ev.index)) continue;
      WireBlock forged = block;
      forged.validated_by = adv.claimed_id.value_or(first_trusted());
      forged.validation = Validation{depart, block.auth_tag.h};
      log(depart, "inject", in.node, to_hex(wire_digest(forged)), "adv=forge-validator;tx=" + std::to_string(ev.index));
      for (const auto& r : config_.roster) {
        if (r.role != Role::client || r.id == in.node) continue;
        send(Message{forged, in.node, r.id, ev.index, AdversaryKind::forge_validator}, depart);
      }
    }
  }

  void handle(const AdversaryEv& ev) {
    const auto& adv = scenario_.adversaries[ev.adversary];
    if (adv.kind == AdversaryKind::fake_device) {
      fake_initiation(adv, ev);
      return;
    }
    // replay
    if (adv.stage == Stage::origin) {
      std::optional<std::pair<std::size_t, WireBlock>> pick;
      if (!adv.targets.empty()) {
        const auto want = adv.targets[ev.k % adv.targets.size()];
        for (const auto& s : accepted_)
          if (s.first == want) pick = s;
      } else if (!accepted_.empty()) {
        pick = accepted_[ev.k % accepted_.size()];
      }
      if (!pick) {
        log(now_, "inject", first_trusted(), "", "adv=replay;nothing-accepted-yet");
        return;
      }
      log(now_, "inject", pick->second.origin, to_hex(wire_digest(pick->second)),
          "adv=replay;tx=" + std::to_string(pick->first));
      for (const auto& r : config_.roster)
        if (r.role == Role::trusted) send(Message{pick->second, pick->second.origin, r.id, pick->first, AdversaryKind::replay}, now_);
    } else {
      std::optional<std::pair<std::size_t, WireBlock>> pick;
      if (!adv.targets.empty()) {
        const auto want = adv.targets[ev.k % adv.targets.size()];
        for (const auto& s : validated_)
          if (s.first == want) pick = s;
      } else if (!validated_.empty()) {
        pick = validated_[ev.k % validated_.size()];
      }
      if (!pick) {
        log(now_, "inject", first_trusted(), "", "adv=replay;nothing-validated-yet");
        return;
      }
      log(now_, "inject", *pick->second.validated_by, to_hex(wire_digest(pick->second)),
          "adv=replay;stage=rebroadcast;tx=" + std::to_string(pick->first));
      for (const auto& r : config_.roster) {
        if (r.role != Role::client) continue;
        send(Message{pick->second, *pick->second.validated_by, r.id, pick->first, AdversaryKind::replay}, now_);
      }
    }
  }

  void fake_initiation(const Adversary& adv, const AdversaryEv& ev) {
    const DeviceId fake_id = adv.claimed_id.value_or(DeviceId(0xFA'00'00'00'00'00ULL | (adv.seed & 0xFFFF'FFFFULL)));
    PufConfig pc;
    pc.rng_seed = adv.seed;
    const auto device = manufacture(pc, fake_id, rng::derive(adv.seed, rng::tag("fake")));
    const auto challenge = random_challenge(device.set_size(), kAuthResponseBits, rng::derive(adv.seed, ev.k));
    Bytes payload(16);
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<std::uint8_t>(rng::derive(adv.seed, ev.k, i));
    BlockData data{fake_id, ev.k, now_, std::move(payload)};
    WireBlock block{data, make_auth_tag(data, evaluate_reference(device, challenge)), fake_id, std::nullopt, std::nullopt};
    log(now_, "inject", fake_id, to_hex(wire_digest(block)), "adv=fake-device;k=" + std::to_string(ev.k));
    broadcast(block, fake_id, std::nullopt, AdversaryKind::fake_device, now_);
  }

  NodeId first_trusted() const {
    for (const auto& r : config_.roster)
      if (r.role == Role::trusted) return r.id;
    return NodeId{};
  }

  void record(const NodeState& n, const Message& m, const Outcome& o, std::uint64_t t) {
    Decision d;
    d.t_ms = t;
    d.node = n.node_id;
    d.role = n.role;
    d.block = m.block;
    d.adversary = m.adversary;
    d.tx = m.tx;
    d.accepted = o.accepted();
    if (!d.accepted) d.reason = o.reason();
    d.tags_computed = o.tags_computed;
    if (m.adversary) ++result_.adversarial_messages;
    result_.decisions.push_back(std::move(d));
  }

  void handle(const DeliverEv& ev) {
    const Message& m = ev.msg;
    auto& receiver = node(m.to);
    const auto k = index_.at(m.to);
    const auto ref = to_hex(wire_digest(m.block));
    const bool genuine_tx = m.tx && !m.adversary;
    // The origin broadcast of a transaction, possibly altered in flight.
    const bool tx_copy = m.tx && (!m.adversary || *m.adversary == AdversaryKind::tamper);

    if (!m.block.validated_by) {
      if (receiver.role != Role::trusted) {
        // Header check only: nobody vouched for this block.
        Outcome o{Rejected{Reason::not_from_trusted}};
        if (m.adversary) record(receiver, m, o, now_);
        log(now_, "drop", m.to, ref, describe(m, "reason=not-from-trusted"));
        return;
      }
      const std::uint64_t arrival = now_;
      const std::uint64_t start = std::max(arrival, busy_[k]);
      const std::uint64_t done = start + sample_cost(config_.processing_cost.at(entry(m.to).hw_class));
      busy_[k] = done;
      const Outcome o = authenticate(receiver, m.block, registry_, done);
      record(receiver, m, o, done);
      if (tx_copy) {
        auto& rec = result_.transactions[*m.tx];
        rec.t_sr = arrival;
        rec.t_sv = done;
        if (!o.accepted()) rec.rejected = o.reason();
      }
      if (!o.accepted()) {
        log(done, "reject", m.to, ref, describe(m, "reason=" + std::string(to_string(o.reason()))));
        return;
      }
      const auto& acc = o.accept();
      log(done, "accept", m.to, to_hex(acc.entry.entry_hash),
          describe(m, "height=" + std::to_string(acc.entry.height) + ";scanned=" + std::to_string(o.tags_computed)));
      if (!genuine_tx) {
        broadcast(*acc.rebroadcast, m.to, std::nullopt, m.adversary, done);
        return;
      }
      accepted_.emplace_back(*m.tx, m.block);
      validated_.emplace_back(*m.tx, *acc.rebroadcast);
      WireBlock outgoing = *acc.rebroadcast;
      std::optional<AdversaryKind> tampered;
      for (const auto& adv : scenario_.adversaries) {
        if (adv.kind != AdversaryKind::tamper || adv.stage != Stage::rebroadcast || !targeted(adv, *m.tx)) continue;
        flip_bit(outgoing, rng::derive(adv.seed, *m.tx), true);
        tampered = AdversaryKind::tamper;
        log(done, "inject", m.to, to_hex(wire_digest(outgoing)), "adv=tamper;stage=rebroadcast;tx=" + std::to_string(*m.tx));
      }
      broadcast(outgoing, m.to, m.tx, tampered, done);
      return;
    }

    if (!registry_.is_trusted(*m.block.validated_by)) {
      Outcome o{Rejected{Reason::not_from_trusted}};
      record(receiver, m, o, now_);
      log(now_, "drop", m.to, ref, describe(m, "reason=not-from-trusted"));
      return;
    }
    const std::uint64_t arrival = now_;
    const std::uint64_t start = std::max(arrival, busy_[k]);
    const std::uint64_t done = start + sample_cost(config_.processing_cost.at(entry(m.to).hw_class));
    busy_[k] = done;
    const Outcome o = accept_validated(receiver, m.block, registry_, done);
    record(receiver, m, o, done);
    if (!o.accepted()) {
      log(done, "drop", m.to, ref, describe(m, "reason=" + std::string(to_string(o.reason()))));
      return;
    }
    const auto& acc = o.accept();
    log(done, "commit", m.to, to_hex(acc.entry.entry_hash), describe(m, "height=" + std::to_string(acc.entry.height)));
    if (genuine_tx) result_.transactions[*m.tx].commits.push_back(ClientCommit{m.to, arrival, done});
  }

  SimConfig config_;
  const Scenario& scenario_;
  Registry registry_;
  RunResult result_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<std::uint64_t> busy_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t order_ = 0;
  std::uint64_t now_ = 0;
  rng::Engine latency_rng_, drop_rng_, cost_rng_;
  std::vector<std::pair<std::size_t, WireBlock>> accepted_;   // genuine blocks the trusted node accepted
  std::vector<std::pair<std::size_t, WireBlock>> validated_;  // trusted rebroadcasts
};

}  // namespace detail

inline RunResult run(const SimConfig& config, const Deployment& deployment, const Scenario& scenario) {
  return detail::Simulation(config, deployment, scenario).run();
}

}  // namespace pufchain::sim
