#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "pufchain/harness.hpp"

using namespace pufchain;
using namespace pufchain::harness;
namespace fs = std::filesystem;

namespace {

ScenarioConfig small(std::uint64_t seed = 3) {
  ScenarioConfig c;
  c.seed = seed;
  c.n_transactions = 30;
  c.n_candidates = 150;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pufchain_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) { return read_file(p.string()); }

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in(R"(# comment
seed = 42
n_transactions=12   # trailing comment
drop_rate = 0.25
cost.rpi9 = 10.5, 1
initiation_cost = 3,0
puf.noise_sigma = 0.2
policy.max_unreliable_bits = 4
adv.replay = 7
roster = 020000000001:trusted:rpi3:wireless, 020000000002:client:rpi9:wired
output_dir = /tmp/x
)");
  const auto c = parse_config(in);
  CHECK(c.seed == 42);
  CHECK(c.n_transactions == 12);
  CHECK(c.sim.drop_rate == 0.25);
  CHECK(c.sim.processing_cost.at("rpi9").mean_ms == 10.5);
  CHECK(c.sim.initiation_cost.sd_ms == 0.0);
  CHECK(c.puf.noise_sigma == 0.2);
  CHECK(c.policy.max_unreliable_bits == 4);
  CHECK(c.adversaries.replay == 7);
  REQUIRE(c.sim.roster.size() == 2);
  CHECK(c.sim.roster[1].hw_class == "rpi9");
  CHECK(c.sim.roster[1].link == sim::LinkClass::wired);
  CHECK(c.output_dir == "/tmp/x");
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config errors") {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return parse_config(in);
  };
  CHECK_THROWS_AS(parse("nope = 1"), ConfigError);
  CHECK_THROWS_AS(parse("seed = x"), ConfigError);
  CHECK_THROWS_AS(parse("seed 5"), ConfigError);
  CHECK_THROWS_AS(parse("roster = 0200:trusted"), ConfigError);
  CHECK_THROWS_AS(parse("cost.rpi1 = 5"), ConfigError);
  CHECK_THROWS_AS(parse("n_transactions = 0").validate(), ConfigError);
  CHECK_THROWS_AS(parse("roster = 020000000001:client:rpi1:wired").validate(), ConfigError);
  CHECK_THROWS_AS(parse("puf.response_bits = 64").validate(), ConfigError);
  CHECK_THROWS_AS(parse("drop_rate = 2").validate(), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/file.conf"), IoError);
}

TEST_CASE("scenario writes every artifact and reruns byte for byte") {
  auto c = small();
  c.adversaries = {2, 3, 2, 2};
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  c.output_dir = d1.string();
  const auto a = run_scenario(c);
  c.output_dir = d2.string();
  run_scenario(c);
  std::vector<fs::path> files{"registry.jsonl", "devices.jsonl", "events.jsonl", "metrics.json", "transactions.csv"};
  for (const auto& r : c.sim.roster) files.push_back(fs::path("chains") / (r.id.to_hex() + ".jsonl"));
  for (const auto& f : files) {
    INFO(f);
    REQUIRE(fs::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  CHECK(slurp(d1 / "transactions.csv").starts_with("tx,seq,device_id,dt_sa_ms,dt_ca_ms,dt_tx_ms,result,reason\n"));
  CHECK(a.metrics.false_accepts == 0);

  auto other = c;
  other.seed = 4;
  other.output_dir.clear();
  CHECK(run_scenario(other).metrics.to_json() != a.metrics.to_json());
}

TEST_CASE("counts add up") {
  auto c = small();
  c.adversaries = {3, 4, 5, 2};
  const auto out = run_scenario(c);
  const auto& m = out.metrics;
  std::size_t rejected = 0, adversarial = 0;
  for (const auto& [k, v] : m.rejected_by_reason) rejected += v;
  for (const auto& [k, v] : m.adversarial_by_reason) adversarial += v;
  CHECK(m.accepted + rejected + m.lost == m.n_transactions);
  CHECK(adversarial == m.adversarial_messages);
  CHECK(rejected == 3);  // the tampered transactions
  CHECK(m.accepted == 27);
  CHECK(m.false_accepts == 0);
  // tx 0 is tampered, so the first replay (t = 1.5 s) has nothing accepted to resend
  std::size_t replays_sent = 0, replays_skipped = 0;
  for (const auto& e : out.run.log) {
    if (e.kind != "inject") continue;
    if (e.detail.starts_with("adv=replay;tx=")) ++replays_sent;
    if (e.detail == "adv=replay;nothing-accepted-yet") ++replays_skipped;
  }
  CHECK(replays_skipped == 1);
  CHECK(replays_sent == 3);
  CHECK(m.adversarial_by_reason.at("replay") == replays_sent);
  CHECK(m.chains_identical);
}

TEST_CASE("reference topology without adversaries accepts everything") {
  const auto out = run_scenario(small());
  CHECK(out.metrics.accepted == 30);
  for (const auto& n : out.run.nodes) CHECK(n.local_chain.size() == 30);
  CHECK(out.metrics.chains_identical);
  CHECK(out.metrics.timing_identities_hold);
  for (const auto& row : out.metrics.transactions) {
    CHECK(*row.dt_tx_ms >= static_cast<double>(*row.dt_sa_ms));
    CHECK(row.result == "accepted");
  }
}

TEST_CASE("without latency the transaction time is the sum of handler costs") {
  auto c = small();
  c.sim.wired = c.sim.wireless = {0, 0};
  c.sim.initiation_cost = {4, 0};
  c.sim.processing_cost = {{"rpi1", {70, 0}}, {"rpi2", {45, 0}}, {"rpi3", {120, 0}}};
  const auto out = run_scenario(c);
  for (const auto& tx : out.run.transactions) {
    REQUIRE(tx.accepted());
    CHECK(*tx.t_sr == tx.t_i + 4);
    CHECK(*tx.t_sv == *tx.t_sr + 120);
    for (const auto& cm : tx.commits) {
      const auto cls = c.sim.find(cm.client)->hw_class;
      CHECK(cm.t_cv - tx.t_i == 4 + 120 + (cls == "rpi1" ? 70 : 45));
    }
  }
}

TEST_CASE("calibrated model lands near the target mean") {
  auto c = small();
  c.n_transactions = 100;
  const auto m = run_scenario(c).metrics;
  INFO("mean dt_tx " << m.dt_tx_ms.mean);
  CHECK(m.within_target());
  CHECK(m.dt_sa_ms.mean == Catch::Approx(120.0).margin(3.0));
}

TEST_CASE("output directory errors carry the path") {
  auto c = small();
  c.n_transactions = 1;
  const auto blocker = scratch("blocker");
  { std::ofstream(blocker.string()) << "x"; }
  c.output_dir = (blocker / "sub").string();
  try {
    run_scenario(c);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(blocker.string()) != std::string::npos);
  }
}

TEST_CASE("pre-built devices and registry can be loaded") {
  auto c = small();
  const auto d = scratch("prebuilt");
  c.output_dir = d.string();
  const auto first = run_scenario(c);
  auto again = c;
  again.output_dir.clear();
  again.devices_file = (d / "devices.jsonl").string();
  again.registry_file = (d / "registry.jsonl").string();
  const auto second = run_scenario(again);
  CHECK(second.run.nodes[0].local_chain == first.run.nodes[0].local_chain);
}

TEST_CASE("characterization per device") {
  ScenarioConfig c;
  c.seed = 5;
  c.fom_challenges = 60;
  const auto f = run_fom_calibration(c);
  REQUIRE(f.devices.size() == 6);
  for (const auto& d : f.devices) {
    CHECK(d.uniqueness_pct >= 43.0);
    CHECK(d.uniqueness_pct <= 51.0);
    CHECK(d.reliability_pct >= 1.0);
    CHECK(d.reliability_pct <= 5.0);
    CHECK(d.n_challenges == 60);
  }
  CHECK(f.to_json()["devices"][0]["puf"] == 1);

  c.puf.noise_sigma = 0.0;
  c.fom_challenges = 20;
  for (const auto& d : run_fom_calibration(c).devices) CHECK(d.reliability_pct == 0.0);
}

TEST_CASE("benchmark at zero difficulty with one stored pair is a wash") {
  ScenarioConfig c;
  c.pow_difficulty_bits = 0;
  c.bench_crp_size = 1;
  const auto b = run_benchmark(c);
  INFO("ratio " << b.speedup);
  CHECK(b.speedup > 0.1);
  CHECK(b.speedup < 10.0);
  CHECK(b.pow_mean_attempts == 1.0);
  CHECK(b.to_json()["nondeterministic"] == true);
}

TEST_CASE("benchmark scan cost grows linearly with the stored set") {
  ScenarioConfig c;
  c.pow_difficulty_bits = 0;
  c.bench_crp_size = 256;
  c.bench_trials = 150;
  const auto b = run_benchmark(c);
  INFO("growth " << b.crp_doubling_growth);
  CHECK(b.crp_doubling_growth <= 2.2);
  CHECK(b.crp_doubling_growth >= 1.5);
}
