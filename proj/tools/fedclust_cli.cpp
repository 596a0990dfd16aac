#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fedclust/config.hpp"
#include "fedclust/federation.hpp"
#include "fedclust/metrics.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fedclust;

int cmd_run(const std::string& config_path, const std::string& out_override,
            std::uint64_t seed_override, bool has_seed, int threads) {
  config::SimConfig cfg = config::parse_config(config_path);
  if (has_seed) cfg.seed = seed_override;
  const std::string out_dir =
      out_override.empty() ? cfg.output_dir : out_override;

  config::Experiment exp = config::build_experiment(cfg);
  exp.run.threads = threads;

  const auto result = federation::run_simulation(
      exp.run, std::move(exp.clients), std::move(exp.test_set));

  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  const std::string summary_path = (fs::path(out_dir) / "summary.json").string();
  metrics::write_rounds(metrics_path, result.rounds);
  metrics::write_summary(summary_path, result.summary, cfg.method_label());

  std::printf("%s: rounds=%zu top_accuracy=%.4f transmissions=%ld modal_p=%d\n",
              cfg.method_label().c_str(), result.rounds.size(),
              result.summary.top_accuracy, result.summary.total_uploads,
              result.summary.modal_p_last_50);
  std::printf("metrics: %s\nsummary: %s\n", metrics_path.c_str(),
              summary_path.c_str());
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths) {
  std::printf("%-18s %14s %15s\n", "Method", "Top accuracy", "Transmissions");
  for (const auto& path : paths) {
    const auto run = metrics::read_run_output(path);
    std::printf("%-18s %13.2f%% %15ld\n", run.label.c_str(),
                100.0 * run.summary.top_accuracy, run.summary.total_uploads);
  }
  return 0;
}

int cmd_partition(const std::string& config_path) {
  const config::SimConfig cfg = config::parse_config(config_path);
  const config::Experiment exp = config::build_experiment(cfg);

  std::map<int, int> all_labels;
  for (const auto& shard : exp.clients) {
    for (int label : shard.dataset.labels) all_labels[label] = 0;
  }

  std::printf("%-8s", "client");
  for (const auto& [label, unused] : all_labels) {
    std::printf(" %7s", ("y=" + std::to_string(label)).c_str());
  }
  std::printf(" %7s\n", "total");
  for (const auto& shard : exp.clients) {
    auto counts = all_labels;
    for (int label : shard.dataset.labels) ++counts[label];
    std::printf("%-8d", shard.client_id);
    long total = 0;
    for (const auto& [label, count] : counts) {
      std::printf(" %7d", count);
      total += count;
    }
    std::printf(" %7ld\n", total);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning simulator with adaptive cluster-based "
               "client selection"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> metrics_paths;

  auto* run = app.add_subcommand("run", "Run a simulation from a JSON config");
  run->add_option("--config", config_path, "Path to the config file")
      ->required();
  run->add_option("--out", out_dir, "Output directory (overrides config)");
  auto* seed_opt =
      run->add_option("--seed", seed, "Master seed (overrides config)");
  run->add_option("--threads", threads, "Worker threads for local training")
      ->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand(
      "compare", "Tabulate top accuracy and transmissions of finished runs");
  compare->add_option("metrics", metrics_paths,
                      "summary.json or metrics.jsonl files")
      ->required()
      ->expected(-1);

  auto* partition = app.add_subcommand(
      "partition", "Print the per-client label distribution of a config");
  partition->add_option("--config", config_path, "Path to the config file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, out_dir, seed, seed_opt->count() > 0,
                     threads);
    }
    if (compare->parsed()) return cmd_compare(metrics_paths);
    return cmd_partition(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
