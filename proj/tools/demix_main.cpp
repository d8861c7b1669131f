#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "demix/checkpoint.hpp"
#include "demix/config.hpp"
#include "demix/evaluation.hpp"
#include "demix/experiment.hpp"
#include "demix/selftest.hpp"

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out) {
  demix::ExperimentConfig config = demix::load_config(config_path);
  if (seed) config.seeds = {*seed};
  if (!out.empty()) config.out = out;
  const auto outcome = demix::run_experiment(config);
  const auto& mean = outcome.summary.at("mean");
  const std::string headline = outcome.summary.at("headline");
  std::cout << config.name << ": " << headline << " mean " << mean.at(headline).get<double>() << " over "
            << config.seeds.size() << " seed(s); wrote " << config.out << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset_spec, double epsilon) {
  const demix::Parameters params = demix::load_checkpoint(checkpoint);
  demix::Dataset data = demix::load_dataset_spec(dataset_spec);
  std::cout << "top1 " << demix::format_metric_value(demix::top1_accuracy(params, data)) << "\n";
  if (epsilon > 0.0) {
    const auto attack = demix::fgsm_attack(params, data, {epsilon, 0.0, 1.0});
    std::cout << "fgsm_top1 " << demix::format_metric_value(attack.adversarial_accuracy) << "\n";
  }
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b) {
  const auto report = demix::compare_runs(read_json(a), read_json(b));
  std::cout << demix::to_json(report).dump(2) << "\n";
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : demix::run_selftest()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupled mixup experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  auto* train = app.add_subcommand("train", "train and evaluate every seed of a config");
  train->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "run a single seed instead of run.seeds");
  train->add_option("--out", out, "output directory (overrides run.out)");

  std::string checkpoint;
  std::string dataset;
  double epsilon = 0.0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "DMX1 checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset, "idx:<images>,<labels> | csv:<path> | two_moons:n:noise:seed | blobs:n:noise:seed")
      ->required();
  eval->add_option("--fgsm", epsilon, "also report FGSM accuracy at this l-inf budget");

  std::string summary_a;
  std::string summary_b;
  auto* compare = app.add_subcommand("compare", "paired per-seed comparison of two summaries");
  compare->add_option("a", summary_a, "baseline summary.json")->required()->check(CLI::ExistingFile);
  compare->add_option("b", summary_b, "candidate summary.json")->required()->check(CLI::ExistingFile);

  auto* selftest = app.add_subcommand("selftest", "gradient-oracle and stationarity checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, seed, out);
    if (*eval) return cmd_eval(checkpoint, dataset, epsilon);
    if (*compare) return cmd_compare(summary_a, summary_b);
    if (*selftest) return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
