// pufchain: scenario runs, PUF characterization, PoP/PoW benchmark, chain verification.

#include <cstdio>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pufchain/pufchain.hpp"

using namespace pufchain;

namespace {

harness::ScenarioConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
  harness::ScenarioConfig c = path.empty() ? harness::ScenarioConfig{} : harness::load_config(path);
  if (seed) c.seed = *seed;
  return c;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
}

nlohmann::ordered_json summary(const harness::ScenarioConfig& c, const harness::MetricsReport& m) {
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"accepted", m.accepted},
          {"n_transactions", m.n_transactions},
          {"adversarial_messages", m.adversarial_messages},
          {"false_accepts", m.false_accepts},
          {"dt_tx_mean_ms", m.dt_tx_ms.mean},
          {"within_target", m.within_target()},
          {"chains_identical", m.chains_identical}};
}

int cmd_scenario(const harness::ScenarioConfig& base, std::size_t parallel, bool with_bench) {
  if (parallel <= 1) {
    auto out = harness::run_scenario(base);
    if (with_bench) {
      out.metrics.bench = harness::run_benchmark(base);
      if (!base.output_dir.empty())
        write_or_print((std::filesystem::path(base.output_dir) / "metrics.json").string(), out.metrics.to_json().dump(2) + "\n");
    }
    std::cout << summary(base, out.metrics).dump(2) << "\n";
    return 0;
  }
  // Sweep: seeds base.seed .. base.seed + parallel - 1, each in its own directory.
  std::vector<harness::ScenarioConfig> configs;
  for (std::size_t k = 0; k < parallel; ++k) {
    auto c = base;
    c.seed = base.seed + k;
    if (!c.output_dir.empty()) c.output_dir = (std::filesystem::path(base.output_dir) / ("seed-" + std::to_string(c.seed))).string();
    configs.push_back(std::move(c));
  }
  std::vector<std::future<harness::MetricsReport>> jobs;
  for (const auto& c : configs) jobs.push_back(std::async(std::launch::async, [&c] { return harness::run_scenario(c).metrics; }));
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  int rc = 0;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    try {
      all.push_back(summary(configs[k], jobs[k].get()));
    } catch (const std::exception& e) {
      std::cerr << "seed " << configs[k].seed << ": " << e.what() << "\n";
      rc = 1;
    }
  }
  std::cout << all.dump(2) << "\n";
  return rc;
}

int cmd_verify(const std::vector<std::string>& files) {
  int rc = 0;
  for (const auto& f : files) {
    const auto text = read_file(f);
    const auto file = chain_from_text(text);
    const auto res = verify_chain_text(text);
    if (res.ok()) {
      std::cout << f << ": ok, " << file.chain.size() << " entries\n";
      continue;
    }
    rc = 2;
    std::cout << f << ": FAILED at height " << *res.first_bad_height;
    if (file.parse_error && *file.parse_error == *res.first_bad_height) std::cout << " (" << file.message << ")";
    else std::cout << " (hash or linkage mismatch)";
    std::cout << "\n";
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PUF-authenticated blockchain simulator"};
  app.require_subcommand(1);

  std::string config_path, output;
  std::optional<std::uint64_t> seed;
  std::size_t parallel = 1;
  bool with_bench = false;

  auto* scenario = app.add_subcommand("scenario", "run an end-to-end scenario and write chains, logs and metrics");
  scenario->add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
  scenario->add_option("--seed", seed, "override the scenario seed");
  scenario->add_option("--output", output, "output directory (overrides output_dir)");
  scenario->add_option("--parallel", parallel, "run N consecutive seeds concurrently")->check(CLI::Range(1, 1024));
  scenario->add_flag("--bench", with_bench, "append wall-clock benchmark fields to metrics.json");

  auto* fom = app.add_subcommand("fom", "characterize a simulated PUF population");
  fom->add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
  fom->add_option("--seed", seed, "override the scenario seed");
  fom->add_option("--output", output, "write the report here instead of stdout");

  auto* bench = app.add_subcommand("bench", "compare PoP authentication with a toy PoW miner");
  bench->add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
  bench->add_option("--seed", seed, "override the scenario seed");
  bench->add_option("--output", output, "write the report here instead of stdout");

  std::vector<std::string> chain_files;
  auto* verify_cmd = app.add_subcommand("verify-chain", "re-verify persisted chain files");
  verify_cmd->add_option("files", chain_files, "chain .jsonl files")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify_cmd) return cmd_verify(chain_files);
    auto c = load(config_path, seed);
    if (*scenario) {
      if (!output.empty()) c.output_dir = output;
      return cmd_scenario(c, parallel, with_bench);
    }
    if (*fom) {
      write_or_print(output, harness::run_fom_calibration(c).to_json().dump(2) + "\n");
      return 0;
    }
    if (*bench) {
      write_or_print(output, harness::run_benchmark(c).to_json().dump(2) + "\n");
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
