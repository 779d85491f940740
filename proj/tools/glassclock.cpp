#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "glassclock/glassclock.hpp"

namespace fs = std::filesystem;
using glassclock::TrialResult;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_run(const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
            unsigned threads, const std::string& only) {
  std::ifstream in(config_path);
  if (!in) throw glassclock::InvalidParameter("cannot open config file " + config_path);
  const auto raw = nlohmann::json::parse(in);
  auto configs = glassclock::configs_from_json(raw);
  if (!only.empty()) {
    std::erase_if(configs, [&](const auto& c) { return c.name != only; });
    if (configs.empty())
      throw glassclock::InvalidParameter("config has no experiment named '" + only + "'");
  }
  for (auto& c : configs) {
    c.seed = seed;
    glassclock::validate_config(c);
  }

  fs::create_directories(out_dir);
  std::string jsonl;
  nlohmann::json timings = nlohmann::json::array();
  std::map<std::string, std::vector<TrialResult>> by_experiment;
  for (const auto& c : configs) {
    std::cerr << "running " << c.name << " ..." << std::flush;
    const auto t0 = std::chrono::steady_clock::now();
    auto results = glassclock::run_experiment(c, {threads});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << " " << results.size() << " results in " << std::fixed << std::setprecision(1)
              << secs << " s\n";
    timings.push_back({{"experiment", c.name}, {"wall_time", secs}});
    jsonl += glassclock::to_jsonl(results);
    auto& bucket = by_experiment[c.name];
    bucket.insert(bucket.end(), results.begin(), results.end());
  }

  write_file(fs::path(out_dir) / "results.jsonl", jsonl);
  for (const auto& [name, results] : by_experiment)
    write_file(fs::path(out_dir) / (name + ".csv"), glassclock::to_csv(results));
  std::string tlines;
  for (const auto& t : timings) tlines += t.dump() + "\n";
  write_file(fs::path(out_dir) / "timings.jsonl", tlines);

  nlohmann::json manifest = {
      {"version", glassclock::kVersion},
      {"config_hash", glassclock::hex64(glassclock::hash_string(raw.dump()))},
      {"seed", seed},
      {"experiments", nlohmann::json::array()},
      {"files", nlohmann::json::array({"results.jsonl", "timings.jsonl"})}};
  for (const auto& c : configs) manifest["experiments"].push_back(c.name);
  for (const auto& [name, _] : by_experiment) manifest["files"].push_back(name + ".csv");
  write_file(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

std::string format_params(const nlohmann::json& params) {
  std::string s;
  for (const auto& [k, v] : params.items()) {
    if (!s.empty()) s += ' ';
    s += k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
  }
  return s;
}

int cmd_report(const std::string& in_dir) {
  const fs::path path = fs::path(in_dir) / "results.jsonl";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::map<std::string, std::vector<TrialResult>> by_experiment;
  std::vector<std::string> order;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto r = TrialResult::from_json(nlohmann::json::parse(line));
    if (!by_experiment.count(r.experiment)) order.push_back(r.experiment);
    by_experiment[r.experiment].push_back(std::move(r));
  }
  const fs::path manifest = fs::path(in_dir) / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream m(manifest);
    const auto j = nlohmann::json::parse(m);
    std::cout << j.value("version", "?") << "  seed " << j.value("seed", std::uint64_t{0})
              << "  config " << j.value("config_hash", "?") << "\n";
  }
  for (const auto& name : order) {
    std::cout << "\n== " << name << " ==\n";
    std::cout << std::left << std::setw(64) << "parameters" << std::right << std::setw(12)
              << "estimate" << std::setw(12) << "ci_lo" << std::setw(12) << "ci_hi"
              << std::setw(8) << "trunc" << std::setw(10) << "reps" << "\n";
    for (const auto& r : by_experiment[name]) {
      std::cout << std::left << std::setw(64) << format_params(r.params) << std::right
                << std::setprecision(5) << std::setw(12) << r.estimate << std::setw(12) << r.ci_lo
                << std::setw(12) << r.ci_hi << std::setw(8) << r.truncated_count << std::setw(10)
                << r.replicates << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo laboratory for random hopping time dynamics of spin glasses"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 0;
  std::string out_dir;
  unsigned threads = 1;
  std::string experiment;
  auto* run = app.add_subcommand("run", "run experiments from a JSON config");
  run->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "master seed")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  run->add_option("--experiment", experiment, "run only this experiment");

  std::string in_dir;
  auto* report = app.add_subcommand("report", "summarize a results directory");
  report->add_option("--in", in_dir, "results directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, seed, out_dir, threads, experiment);
    return cmd_report(in_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
