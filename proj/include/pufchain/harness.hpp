#pragma once

// End-to-end scenario runs, transaction timing metrics, PUF characterization
// and the PoP-vs-PoW latency benchmark.
//
// Every random quantity is derived from the single scenario seed:
//   puf manufacturing base   derive(seed, tag("puf"))
//   device k                 derive(seed, tag("device"), k)
//   enrollment of node k     derive(seed, tag("enroll-candidates"), k) / tag("enroll-screening")
//   workload (payloads, challenge picks)   derive(seed, tag("workload"))
//   network (latency, loss, costs)         derive(seed, tag("network"))
//   adversary a              derive(seed, tag("adversary"), a)
//   characterization         tag("fom-*"),  benchmark  tag("bench")

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pufchain/consensus.hpp"
#include "pufchain/fom.hpp"
#include "pufchain/ledger.hpp"
#include "pufchain/netsim.hpp"
#include "pufchain/puf.hpp"
#include "pufchain/random.hpp"
#include "pufchain/registry.hpp"

namespace pufchain::harness {

struct AdversaryCounts {
  std::size_t tamper = 0;
  std::size_t replay = 0;
  std::size_t fake_device = 0;
  std::size_t forge_validator = 0;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  sim::SimConfig sim = [] {
    sim::SimConfig s;
    s.roster = sim::reference_roster();
    return s;
  }();
  PufConfig puf;
  fom::ScreeningPolicy policy;
  std::size_t n_transactions = 300;
  std::uint64_t tx_interval_ms = 1000;
  std::size_t payload_bytes = 32;
  std::size_t n_candidates = 500;
  unsigned pow_difficulty_bits = 20;
  AdversaryCounts adversaries;

  // characterization
  std::size_t fom_devices = 6;
  std::size_t fom_challenges = 100;
  std::size_t fom_reevals = 11;

  // benchmark
  std::size_t bench_trials = 100;
  std::size_t bench_crp_size = 128;
  std::size_t bench_payload_bytes = 64;

  // calibration target for the mean end-to-end transaction time
  double target_tx_ms = 198.0;
  double target_tx_tolerance = 0.20;

  std::string output_dir;
  std::string devices_file;   // optional pre-built devices (roster order)
  std::string registry_file;  // optional pre-built registry

  void validate() const {
    if (n_transactions < 1) throw ConfigError("n_transactions must be at least 1");
    if (tx_interval_ms < 1) throw ConfigError("tx_interval_ms must be at least 1");
    if (payload_bytes > kMaxPayload) throw ConfigError("payload_bytes exceeds 64 KiB");
    if (n_candidates < 1) throw ConfigError("n_candidates must be at least 1");
    if (pow_difficulty_bits > 32) throw ConfigError("pow_difficulty_bits must be at most 32");
    if (puf.response_bits != kAuthResponseBits) throw ConfigError("protocol runs need 128-bit responses");
    if (fom_devices < 2) throw ConfigError("fom_devices must be at least 2");
    if (fom_challenges < 1) throw ConfigError("fom_challenges must be at least 1");
    if (fom_reevals < 2) throw ConfigError("fom_reevals must be at least 2");
    if (bench_trials < 1 || bench_crp_size < 1) throw ConfigError("benchmark needs trials and CRPs");
    puf.validate();
    policy.validate(puf.response_bits);
    try {
      sim.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
  }
};

// ---- config file: flat key = value, '#' comments ----------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

inline sim::CostModel parse_cost(const std::string& key, const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() != 2) throw ConfigError(key + " expects 'mean,sd'");
  return {parse_number<double>(key, parts[0]), parse_number<double>(key, parts[1])};
}

inline std::vector<sim::RosterEntry> parse_roster(const std::string& value) {
  std::vector<sim::RosterEntry> roster;
  for (const auto& item : split(value, ',')) {
    const auto f = split(item, ':');
    if (f.size() != 4) throw ConfigError("roster entry '" + item + "' must be id:role:hw_class:link");
    sim::RosterEntry r;
    try {
      r.id = DeviceId::from_hex(f[0]);
    } catch (const Error& e) {
      throw ConfigError("roster id '" + f[0] + "': " + e.what());
    }
    if (f[1] == "trusted") r.role = Role::trusted;
    else if (f[1] == "client") r.role = Role::client;
    else throw ConfigError("roster role must be trusted or client: " + f[1]);
    r.hw_class = f[2];
    if (f[3] == "wired") r.link = sim::LinkClass::wired;
    else if (f[3] == "wireless") r.link = sim::LinkClass::wireless;
    else throw ConfigError("roster link must be wired or wireless: " + f[3]);
    roster.push_back(std::move(r));
  }
  return roster;
}

}  // namespace detail

inline void apply_setting(ScenarioConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_number;
  auto u64 = [&] { return parse_number<std::uint64_t>(key, value); };
  auto sz = [&] { return parse_number<std::size_t>(key, value); };
  auto dbl = [&] { return parse_number<double>(key, value); };

  if (key == "seed") c.seed = u64();
  else if (key == "n_transactions") c.n_transactions = sz();
  else if (key == "tx_interval_ms") c.tx_interval_ms = u64();
  else if (key == "payload_bytes") c.payload_bytes = sz();
  else if (key == "n_candidates") c.n_candidates = sz();
  else if (key == "pow_difficulty_bits") c.pow_difficulty_bits = parse_number<unsigned>(key, value);
  else if (key == "drop_rate") c.sim.drop_rate = dbl();
  else if (key == "roster") c.sim.roster = detail::parse_roster(value);
  else if (key == "latency_wired_base_ms") c.sim.wired.base_ms = u64();
  else if (key == "latency_wired_jitter_ms") c.sim.wired.jitter_ms = u64();
  else if (key == "latency_wireless_base_ms") c.sim.wireless.base_ms = u64();
  else if (key == "latency_wireless_jitter_ms") c.sim.wireless.jitter_ms = u64();
  else if (key == "initiation_cost") c.sim.initiation_cost = detail::parse_cost(key, value);
  else if (key.starts_with("cost.")) c.sim.processing_cost[key.substr(5)] = detail::parse_cost(key, value);
  else if (key == "puf.n_oscillators") c.puf.n_oscillators = sz();
  else if (key == "puf.response_bits") c.puf.response_bits = sz();
  else if (key == "puf.freq_mean") c.puf.freq_mean = dbl();
  else if (key == "puf.freq_sigma") c.puf.freq_sigma = dbl();
  else if (key == "puf.noise_sigma") c.puf.noise_sigma = dbl();
  else if (key == "policy.randomness_low") c.policy.randomness_low = dbl();
  else if (key == "policy.randomness_high") c.policy.randomness_high = dbl();
  else if (key == "policy.max_unreliable_bits") c.policy.max_unreliable_bits = sz();
  else if (key == "policy.n_screen_reevals") c.policy.n_screen_reevals = sz();
  else if (key == "adv.tamper") c.adversaries.tamper = sz();
  else if (key == "adv.replay") c.adversaries.replay = sz();
  else if (key == "adv.fake_device") c.adversaries.fake_device = sz();
  else if (key == "adv.forge_validator") c.adversaries.forge_validator = sz();
  else if (key == "fom.devices") c.fom_devices = sz();
  else if (key == "fom.challenges") c.fom_challenges = sz();
  else if (key == "fom.reevals") c.fom_reevals = sz();
  else if (key == "bench.trials") c.bench_trials = sz();
  else if (key == "bench.crp_size") c.bench_crp_size = sz();
  else if (key == "bench.payload_bytes") c.bench_payload_bytes = sz();
  else if (key == "target_tx_ms") c.target_tx_ms = dbl();
  else if (key == "target_tx_tolerance") c.target_tx_tolerance = dbl();
  else if (key == "output_dir") c.output_dir = value;
  else if (key == "devices_file") c.devices_file = value;
  else if (key == "registry_file") c.registry_file = value;
  else throw ConfigError("unknown config key: " + key);
}

inline ScenarioConfig parse_config(std::istream& in) {
  ScenarioConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    apply_setting(c, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
  }
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  return parse_config(in);
}

// ---- metrics ---------------------------------------------------------------

struct Stats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation

  static Stats of(const std::vector<double>& xs) {
    Stats s;
    s.n = xs.size();
    if (xs.empty()) return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
      double acc = 0.0;
      for (double x : xs) acc += (x - s.mean) * (x - s.mean);
      s.sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return s;
  }
};

struct TxRow {
  std::size_t tx = 0;
  std::uint64_t seq = 0;
  DeviceId device_id;
  std::optional<std::uint64_t> dt_sa_ms;
  std::optional<double> dt_ca_ms;  // mean over the clients that committed
  std::optional<double> dt_tx_ms;  // mean over the clients that committed
  std::string result;              // accepted | rejected | lost
  std::string reason;
};

struct NodeTiming {
  NodeId node;
  Role role = Role::client;
  std::string hw_class;
  Stats add_ms;  // dt_sa for trusted nodes, dt_ca for clients
  std::size_t chain_height = 0;
};

struct BenchReport {
  unsigned difficulty_bits = 0;
  std::size_t trials = 0;
  std::size_t crp_size = 0;
  std::size_t payload_bytes = 0;
  double pop_worst_median_us = 0.0;
  double pop_random_median_us = 0.0;
  double pop_doubled_worst_median_us = 0.0;
  double pow_median_us = 0.0;
  double pow_mean_attempts = 0.0;
  double speedup = 0.0;             // pow median / pop worst-case median
  double crp_doubling_growth = 0.0; // pop worst median at 2x CRPs / at 1x

  nlohmann::ordered_json to_json() const {
    return {{"nondeterministic", true},
            {"difficulty_bits", difficulty_bits},
            {"trials", trials},
            {"crp_size", crp_size},
            {"payload_bytes", payload_bytes},
            {"pop_worst_median_us", pop_worst_median_us},
            {"pop_random_median_us", pop_random_median_us},
            {"pop_doubled_worst_median_us", pop_doubled_worst_median_us},
            {"pow_median_us", pow_median_us},
            {"pow_mean_attempts", pow_mean_attempts},
            {"speedup", speedup},
            {"crp_doubling_growth", crp_doubling_growth}};
  }
};

struct MetricsReport {
  std::size_t n_transactions = 0;
  std::size_t accepted = 0;
  // accepted + rejected + lost == n_transactions
  std::map<std::string, std::size_t> rejected_by_reason;
  // one decision per adversarial copy reaching a handler; sums to adversarial_messages
  std::map<std::string, std::size_t> adversarial_by_reason;
  std::size_t lost = 0;
  std::size_t adversarial_messages = 0;
  std::size_t false_accepts = 0;
  Stats dt_sa_ms;
  Stats dt_ca_ms;
  Stats dt_tx_ms;
  std::vector<NodeTiming> nodes;
  std::vector<TxRow> transactions;
  bool chains_identical = false;
  bool timing_identities_hold = false;
  double target_tx_ms = 0.0;
  double target_tx_tolerance = 0.0;
  std::optional<BenchReport> bench;  // wall-clock, excluded from determinism

  bool within_target() const {
    return std::abs(dt_tx_ms.mean - target_tx_ms) <= target_tx_tolerance * target_tx_ms;
  }

  nlohmann::ordered_json to_json() const {
    auto stats = [](const Stats& s) { return nlohmann::ordered_json{{"n", s.n}, {"mean", s.mean}, {"sd", s.sd}}; };
    nlohmann::ordered_json j;
    j["n_transactions"] = n_transactions;
    j["accepted"] = accepted;
    j["rejected_by_reason"] = rejected_by_reason;
    j["adversarial_by_reason"] = adversarial_by_reason;
    j["lost"] = lost;
    j["adversarial_messages"] = adversarial_messages;
    j["false_accepts"] = false_accepts;
    j["dt_sa_ms"] = stats(dt_sa_ms);
    j["dt_ca_ms"] = stats(dt_ca_ms);
    j["dt_tx_ms"] = stats(dt_tx_ms);
    j["target_tx_ms"] = target_tx_ms;
    j["target_tx_tolerance"] = target_tx_tolerance;
    j["within_target"] = within_target();
    j["chains_identical"] = chains_identical;
    j["timing_identities_hold"] = timing_identities_hold;
    auto& nodes_j = j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : nodes)
      nodes_j.push_back({{"node", n.node.to_hex()},
                         {"role", to_string(n.role)},
                         {"hw_class", n.hw_class},
                         {"chain_height", n.chain_height},
                         {"add_ms", stats(n.add_ms)}});
    if (bench) j["nondeterministic"] = {{"bench", bench->to_json()}};
    return j;
  }
};

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

inline std::string transactions_csv(const MetricsReport& m) {
  std::string out = "tx,seq,device_id,dt_sa_ms,dt_ca_ms,dt_tx_ms,result,reason\n";
  for (const auto& r : m.transactions) {
    out += std::to_string(r.tx) + ',' + std::to_string(r.seq) + ',' + r.device_id.to_hex() + ',';
    out += (r.dt_sa_ms ? std::to_string(*r.dt_sa_ms) : "") + ',';
    out += (r.dt_ca_ms ? format_fixed(*r.dt_ca_ms, 3) : "") + ',';
    out += (r.dt_tx_ms ? format_fixed(*r.dt_tx_ms, 3) : "") + ',';
    out += r.result + ',' + r.reason + '\n';
  }
  return out;
}

inline MetricsReport compute_metrics(const ScenarioConfig& config, const sim::RunResult& run) {
  MetricsReport m;
  m.n_transactions = run.transactions.size();
  m.adversarial_messages = run.adversarial_messages;
  m.target_tx_ms = config.target_tx_ms;
  m.target_tx_tolerance = config.target_tx_tolerance;
  m.timing_identities_hold = true;

  std::vector<double> sa, ca, tx_all;
  std::map<NodeId, std::vector<double>> per_node;
  for (const auto& rec : run.transactions) {
    TxRow row;
    row.tx = rec.tx;
    row.seq = rec.seq;
    row.device_id = rec.origin;
    if (!rec.t_sv) {
      row.result = "lost";
      ++m.lost;
    } else {
      row.dt_sa_ms = *rec.t_sv - *rec.t_sr;
      per_node[config.sim.roster.front().id];  // keeps key order stable
      if (rec.rejected) {
        row.result = "rejected";
        row.reason = std::string(to_string(*rec.rejected));
      } else {
        row.result = "accepted";
        ++m.accepted;
        sa.push_back(static_cast<double>(*row.dt_sa_ms));
        double ca_sum = 0.0, tx_sum = 0.0;
        for (const auto& c : rec.commits) {
          const auto dt_ca = c.t_cv - c.t_cr;
          const auto dt_tx = c.t_cv - rec.t_i;
          // Eq-level identities in integer simulated time
          const bool sums = dt_tx == (c.t_cv - c.t_cr) + (c.t_cr - *rec.t_sv) + (*rec.t_sv - *rec.t_sr) + (*rec.t_sr - rec.t_i);
          const bool ordered = rec.t_i <= *rec.t_sr && *rec.t_sr <= *rec.t_sv && *rec.t_sv <= c.t_cr && c.t_cr <= c.t_cv;
          if (!sums || !ordered || dt_tx < *row.dt_sa_ms) m.timing_identities_hold = false;
          ca_sum += static_cast<double>(dt_ca);
          tx_sum += static_cast<double>(dt_tx);
          per_node[c.client].push_back(static_cast<double>(dt_ca));
        }
        if (!rec.commits.empty()) {
          row.dt_ca_ms = ca_sum / static_cast<double>(rec.commits.size());
          row.dt_tx_ms = tx_sum / static_cast<double>(rec.commits.size());
          ca.push_back(*row.dt_ca_ms);
          tx_all.push_back(*row.dt_tx_ms);
        }
      }
    }
    m.transactions.push_back(std::move(row));
  }
  m.dt_sa_ms = Stats::of(sa);
  m.dt_ca_ms = Stats::of(ca);
  m.dt_tx_ms = Stats::of(tx_all);

  for (const auto& d : run.decisions) {
    if (!d.adversary) continue;
    if (d.accepted) {
      ++m.false_accepts;
      ++m.adversarial_by_reason["accepted"];
    } else {
      ++m.adversarial_by_reason[std::string(to_string(*d.reason))];
    }
  }
  for (const auto& row : m.transactions)
    if (row.result == "rejected") ++m.rejected_by_reason[row.reason];

  for (std::size_t k = 0; k < config.sim.roster.size(); ++k) {
    const auto& r = config.sim.roster[k];
    NodeTiming nt;
    nt.node = r.id;
    nt.role = r.role;
    nt.hw_class = r.hw_class;
    nt.chain_height = run.node(r.id).local_chain.size();
    if (r.role == Role::trusted) {
      nt.add_ms = Stats::of(sa);
    } else {
      nt.add_ms = Stats::of(per_node[r.id]);
    }
    m.nodes.push_back(std::move(nt));
  }
  m.chains_identical = true;
  for (const auto& n : run.nodes)
    if (!(n.local_chain == run.nodes.front().local_chain)) m.chains_identical = false;
  return m;
}

// ---- scenario -------------------------------------------------------------------

struct ScenarioOutput {
  MetricsReport metrics;
  sim::RunResult run;
  Registry registry;
  std::vector<PufDevice> devices;
};

inline std::vector<PufDevice> manufacture_roster(const ScenarioConfig& c) {
  PufConfig pc = c.puf;
  pc.rng_seed = rng::derive(c.seed, rng::tag("puf"));
  std::vector<PufDevice> devices;
  for (std::size_t k = 0; k < c.sim.roster.size(); ++k)
    devices.push_back(manufacture(pc, c.sim.roster[k].id, rng::derive(c.seed, rng::tag("device"), k)));
  return devices;
}

inline Registry enroll_roster(const ScenarioConfig& c, const std::vector<PufDevice>& devices) {
  Registry reg;
  for (const auto& r : c.sim.roster)
    if (r.role == Role::trusted) reg.grant_trusted(r.id);
  for (std::size_t k = 0; k < devices.size(); ++k) {
    EnrollSeeds seeds{rng::derive(c.seed, rng::tag("enroll-candidates"), k),
                      rng::derive(c.seed, rng::tag("enroll-screening"), k)};
    reg.enroll(devices[k], c.n_candidates, c.policy, seeds, 0);
  }
  return reg;
}

// Sensor-like payload: ASCII readings padded to the requested size.
inline Bytes sensor_payload(rng::Engine& e, std::size_t n, std::size_t tx) {
  std::string s = "tx=" + std::to_string(tx) + ";temp=" + std::to_string(150 + rng::below(e, 200)) +
                  ";hum=" + std::to_string(200 + rng::below(e, 600)) + ";";
  while (s.size() < n) s.push_back(static_cast<char>('a' + rng::below(e, 26)));
  s.resize(n);
  return Bytes(s.begin(), s.end());
}

inline sim::Scenario build_scenario(const ScenarioConfig& c, const Registry& registry) {
  sim::Scenario sc;
  std::vector<NodeId> initiators;
  for (const auto& r : c.sim.roster)
    if (r.role == Role::client) initiators.push_back(r.id);
  if (initiators.empty())
    for (const auto& r : c.sim.roster) initiators.push_back(r.id);
  auto work = rng::engine(rng::derive(c.seed, rng::tag("workload")));
  for (std::size_t k = 0; k < c.n_transactions; ++k) {
    sim::Initiation in;
    in.t_ms = (k + 1) * c.tx_interval_ms;
    in.node = initiators[k % initiators.size()];
    in.payload = sensor_payload(work, c.payload_bytes, k);
    in.challenge_index = rng::below(work, registry.pair_count(in.node));
    sc.initiations.push_back(std::move(in));
  }
  const std::size_t n = c.n_transactions;
  auto spread_targets = [&](std::size_t count) {
    std::vector<std::size_t> t;
    for (std::size_t k = 0; k < std::min(count, n); ++k) t.push_back(k * n / std::min(count, n));
    return t;
  };
  auto spread_times = [&](std::size_t count, std::uint64_t offset) {
    std::vector<std::uint64_t> t;
    for (std::size_t k = 0; k < count; ++k) t.push_back((k % n + 1) * c.tx_interval_ms + offset + k / n);
    return t;
  };
  std::uint64_t a = 0;
  auto adv_seed = [&] { return rng::derive(c.seed, rng::tag("adversary"), a++); };
  if (c.adversaries.tamper)
    sc = sim::inject({sim::AdversaryKind::tamper, spread_targets(c.adversaries.tamper), {}, sim::Stage::origin,
                      std::nullopt, adv_seed()},
                     std::move(sc));
  if (c.adversaries.forge_validator)
    sc = sim::inject({sim::AdversaryKind::forge_validator, spread_targets(c.adversaries.forge_validator), {},
                      sim::Stage::origin, std::nullopt, adv_seed()},
                     std::move(sc));
  if (c.adversaries.replay)
    sc = sim::inject({sim::AdversaryKind::replay, {}, spread_times(c.adversaries.replay, c.tx_interval_ms / 2),
                      sim::Stage::origin, std::nullopt, adv_seed()},
                     std::move(sc));
  if (c.adversaries.fake_device)
    sc = sim::inject({sim::AdversaryKind::fake_device, {}, spread_times(c.adversaries.fake_device, c.tx_interval_ms / 4),
                      sim::Stage::origin, std::nullopt, adv_seed()},
                     std::move(sc));
  return sc;
}

namespace detail {
inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing: " + path.string());
}
}  // namespace detail

inline void write_outputs(const ScenarioConfig& c, const ScenarioOutput& out) {
  namespace fs = std::filesystem;
  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir / "chains", ec);
  if (ec) throw IoError("cannot create output directory " + (dir / "chains").string() + ": " + ec.message());
  for (const auto& n : out.run.nodes) detail::write_text(dir / "chains" / (n.node_id.to_hex() + ".jsonl"), chain_to_text(n.local_chain));
  std::ostringstream reg, devs;
  write_registry(reg, out.registry);
  write_devices(devs, out.devices);
  detail::write_text(dir / "registry.jsonl", reg.str());
  detail::write_text(dir / "devices.jsonl", devs.str());
  detail::write_text(dir / "events.jsonl", sim::event_log_text(out.run.log));
  detail::write_text(dir / "metrics.json", out.metrics.to_json().dump(2) + "\n");
  detail::write_text(dir / "transactions.csv", transactions_csv(out.metrics));
}

inline ScenarioOutput run_scenario(const ScenarioConfig& config) {
  config.validate();
  ScenarioOutput out;
  if (!config.devices_file.empty()) {
    std::ifstream in(config.devices_file);
    if (!in) throw IoError("cannot open devices file: " + config.devices_file);
    out.devices = read_devices(in);
  } else {
    out.devices = manufacture_roster(config);
  }
  if (!config.registry_file.empty()) {
    std::ifstream in(config.registry_file);
    if (!in) throw IoError("cannot open registry file: " + config.registry_file);
    out.registry = read_registry(in);
    for (const auto& r : config.sim.roster)
      if (r.role == Role::trusted) out.registry.grant_trusted(r.id);
  } else {
    out.registry = enroll_roster(config, out.devices);
  }
  const auto scenario = build_scenario(config, out.registry);
  sim::SimConfig simc = config.sim;
  simc.seed = rng::derive(config.seed, rng::tag("network"));
  sim::Deployment dep{out.devices, out.registry};
  out.run = sim::run(simc, dep, scenario);
  out.metrics = compute_metrics(config, out.run);
  if (!config.output_dir.empty()) write_outputs(config, out);
  return out;
}

// ---- PUF characterization ----------------------------------------------------

struct DeviceFom {
  std::size_t puf = 0;  // 1-based, as in the per-PUF table layout
  DeviceId device_id;
  double uniqueness_pct = 0.0;
  double reliability_pct = 0.0;
  double randomness_pct = 0.0;
  std::size_t n_challenges = 0;
  std::size_t n_candidates_screened = 0;
};

struct FomCalibration {
  fom::FomReport population;
  std::vector<DeviceFom> devices;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["population"] = population.to_json();
    auto& arr = j["devices"] = nlohmann::ordered_json::array();
    for (const auto& d : devices)
      arr.push_back({{"puf", d.puf},
                     {"device_id", d.device_id.to_hex()},
                     {"uniqueness_pct", d.uniqueness_pct},
                     {"reliability_pct", d.reliability_pct},
                     {"randomness_pct", d.randomness_pct},
                     {"n_challenges", d.n_challenges},
                     {"n_candidates_screened", d.n_candidates_screened}});
    return j;
  }
};

struct ScreenedSet {
  std::vector<Challenge> challenges;
  std::size_t screened = 0;
};

// Screens candidates for one device until `want` are accepted or the
// candidate budget runs out.
inline ScreenedSet screen_for_device(const PufDevice& device, const ScenarioConfig& c, std::size_t d,
                                     std::size_t want) {
  ScreenedSet s;
  for (std::size_t k = 0; k < c.n_candidates && s.challenges.size() < want; ++k) {
    auto ch = random_challenge(device.set_size(), c.puf.response_bits, rng::derive(c.seed, rng::tag("fom-candidates"), d, k));
    ++s.screened;
    if (fom::screen_challenge(device, ch, c.policy, rng::derive(c.seed, rng::tag("fom-screening"), d, k)).accepted)
      s.challenges.push_back(std::move(ch));
  }
  return s;
}

inline FomCalibration run_fom_calibration(const ScenarioConfig& c) {
  c.puf.validate();
  c.policy.validate(c.puf.response_bits);
  if (c.fom_devices < 2) throw ConfigError("characterization needs at least two devices");
  PufConfig pc = c.puf;
  pc.rng_seed = rng::derive(c.seed, rng::tag("fom-puf"));
  std::vector<PufDevice> devices;
  for (std::size_t k = 0; k < c.fom_devices; ++k)
    devices.push_back(manufacture(pc, DeviceId(0x0F'00'00'00'00'00ULL + k + 1), rng::derive(c.seed, rng::tag("fom-device"), k)));

  // Per-device work is independent and seeded per task.
  std::vector<std::future<std::pair<ScreenedSet, double>>> jobs;
  for (std::size_t d = 0; d < devices.size(); ++d) {
    jobs.push_back(std::async(std::launch::async, [&, d] {
      auto set = screen_for_device(devices[d], c, d, c.fom_challenges);
      double rel = 0.0;
      for (std::size_t k = 0; k < set.challenges.size(); ++k) {
        const auto seeds = fom::seed_list(rng::derive(c.seed, rng::tag("fom-reliability"), d, k), c.fom_reevals);
        rel += fom::reliability(devices[d], set.challenges[k], seeds);
      }
      if (!set.challenges.empty()) rel /= static_cast<double>(set.challenges.size());
      return std::make_pair(std::move(set), rel);
    }));
  }
  std::vector<std::pair<ScreenedSet, double>> per_device;
  for (auto& j : jobs) per_device.push_back(j.get());

  auto matrix_for = [&](const std::vector<Challenge>& chals) {
    fom::ResponseMatrix m(devices.size());
    for (std::size_t d = 0; d < devices.size(); ++d)
      for (const auto& ch : chals) m[d].push_back(evaluate_reference(devices[d], ch));
    return m;
  };

  FomCalibration out;
  double rel_sum = 0.0, rnd_sum = 0.0;
  for (std::size_t d = 0; d < devices.size(); ++d) {
    const auto& [set, rel] = per_device[d];
    if (set.challenges.empty()) throw EnrollmentFailed("no challenge passed screening for characterization device");
    const auto m = matrix_for(set.challenges);
    DeviceFom f;
    f.puf = d + 1;
    f.device_id = devices[d].id();
    f.uniqueness_pct = fom::device_uniqueness(m, d);
    f.reliability_pct = rel;
    double rnd = 0.0;
    for (const auto& r : m[d]) rnd += fom::randomness(r);
    f.randomness_pct = rnd / static_cast<double>(m[d].size());
    f.n_challenges = set.challenges.size();
    f.n_candidates_screened = set.screened;
    rel_sum += f.reliability_pct;
    rnd_sum += f.randomness_pct;
    out.devices.push_back(f);
  }
  // Population view: every device answers the challenges screened on the first.
  const auto m0 = matrix_for(per_device.front().first.challenges);
  out.population.uniqueness_pct = fom::uniqueness(m0);
  out.population.correlation = fom::correlation(m0);
  out.population.reliability_pct = rel_sum / static_cast<double>(devices.size());
  out.population.randomness_pct = rnd_sum / static_cast<double>(devices.size());
  out.population.n_devices = devices.size();
  out.population.n_challenges = per_device.front().first.challenges.size();
  out.population.n_reevaluations = c.fom_reevals;
  return out;
}

// ---- benchmark -------------------------------------------------------------------

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace detail {

// Trusted node T and a client device whose record holds exactly crp_size
// pairs (random challenges, noiseless responses).
struct BenchRig {
  NodeState trusted;
  NodeState client;
  Registry registry;
};

inline BenchRig make_bench_rig(const ScenarioConfig& c, std::size_t crp_size) {
  PufConfig pc = c.puf;
  pc.rng_seed = rng::derive(c.seed, rng::tag("bench"));
  const DeviceId tid(0x0B'00'00'00'00'01ULL), cid(0x0B'00'00'00'00'02ULL);
  const auto tdev = manufacture(pc, tid, 1);
  const auto cdev = manufacture(pc, cid, 2);
  Registry reg;
  reg.grant_trusted(tid);
  auto record_for = [&](const PufDevice& dev, std::size_t n, std::uint64_t salt) {
    CrpRecord rec;
    rec.device_id = dev.id();
    for (std::size_t k = 0; k < n; ++k) {
      auto ch = random_challenge(dev.set_size(), kAuthResponseBits, rng::derive(c.seed, rng::tag("bench-crp"), salt, k));
      auto r = evaluate_reference(dev, ch);
      rec.pairs.emplace_back(std::move(ch), std::move(r));
    }
    return rec;
  };
  reg.insert(record_for(tdev, 4, 1));
  reg.insert(record_for(cdev, crp_size, 2));
  BenchRig rig{NodeState(tid, Role::trusted, tdev, reg.provision_challenges(tid)),
               NodeState(cid, Role::client, cdev, reg.provision_challenges(cid)), std::move(reg)};
  return rig;
}

// One benchmark configuration: a stored set of crp_size pairs and the index
// the client answers with on each trial.
struct BenchArm {
  std::size_t crp_size = 0;
  std::function<std::size_t(std::size_t)> pick;
};

// Median wall time (us) of authenticate per arm. Trials of all arms are
// interleaved so that they share the same machine load.
inline std::vector<double> time_authenticate(const ScenarioConfig& c, std::size_t trials, const std::vector<BenchArm>& arms) {
  std::vector<BenchRig> rigs;
  for (const auto& arm : arms) rigs.push_back(make_bench_rig(c, arm.crp_size));
  std::vector<std::vector<double>> us(arms.size());
  for (std::size_t t = 0; t < trials; ++t) {
    auto work = rng::engine(rng::derive(c.seed, rng::tag("bench-payload"), t));
    const auto payload = sensor_payload(work, c.bench_payload_bytes, t);
    for (std::size_t a = 0; a < arms.size(); ++a) {
      auto& rig = rigs[a];
      const auto block = initiate(rig.client, payload, arms[a].pick(t), t);
      const auto t0 = std::chrono::steady_clock::now();
      const auto o = authenticate(rig.trusted, block, rig.registry, t);
      const auto t1 = std::chrono::steady_clock::now();
      if (!o.accepted()) throw Error("benchmark block failed authentication");
      us[a].push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
  }
  std::vector<double> medians;
  for (const auto& v : us) medians.push_back(median(v));
  return medians;
}

}  // namespace detail

inline BenchReport run_benchmark(const ScenarioConfig& c) {
  if (c.pow_difficulty_bits > 32) throw ConfigError("pow_difficulty_bits must be at most 32");
  if (c.bench_trials < 1 || c.bench_crp_size < 1) throw ConfigError("benchmark needs trials and CRPs");
  BenchReport b;
  b.difficulty_bits = c.pow_difficulty_bits;
  b.trials = c.bench_trials;
  b.crp_size = c.bench_crp_size;
  b.payload_bytes = c.bench_payload_bytes;

  const auto n = c.bench_crp_size;
  auto picks = rng::engine(rng::derive(c.seed, rng::tag("bench-pick")));
  const auto medians = detail::time_authenticate(
      c, c.bench_trials,
      {{n, [&](std::size_t) { return n - 1; }},
       {2 * n, [&](std::size_t) { return 2 * n - 1; }},
       {n, [&](std::size_t) { return static_cast<std::size_t>(rng::below(picks, n)); }}});
  b.pop_worst_median_us = medians[0];
  b.pop_doubled_worst_median_us = medians[1];
  b.pop_random_median_us = medians[2];

  auto work = rng::engine(rng::derive(c.seed, rng::tag("bench-pow")));
  std::vector<double> us;
  double attempts = 0.0;
  for (std::size_t t = 0; t < c.bench_trials; ++t) {
    const BlockData data{DeviceId(0x0B'00'00'00'00'02ULL), t, t, sensor_payload(work, c.bench_payload_bytes, t)};
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = pow_mine_baseline(data, c.pow_difficulty_bits);
    const auto t1 = std::chrono::steady_clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    attempts += static_cast<double>(res.attempts);
  }
  b.pow_median_us = median(us);
  b.pow_mean_attempts = attempts / static_cast<double>(c.bench_trials);
  b.speedup = b.pop_worst_median_us > 0.0 ? b.pow_median_us / b.pop_worst_median_us : 0.0;
  b.crp_doubling_growth = b.pop_worst_median_us > 0.0 ? b.pop_doubled_worst_median_us / b.pop_worst_median_us : 0.0;
  return b;
}

}  // namespace pufchain::harness
