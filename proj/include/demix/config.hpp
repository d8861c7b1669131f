#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "demix/dataset.hpp"
#include "demix/losses.hpp"
#include "demix/mixers.hpp"
#include "demix/network.hpp"
#include "demix/ssl.hpp"

namespace demix {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { idx, csv, blobs, two_moons };

struct DatasetConfig {
  DataSource source = DataSource::idx;
  // idx
  std::string train_images;
  std::string train_labels;
  std::string val_images;
  std::string val_labels;
  // csv
  std::string train_csv;
  std::string val_csv;
  // synthetic
  int n = 1000;
  int test_n = 1000;
  double noise = 0.1;
  std::uint64_t seed = 7;
  int classes = 2;
  // 0 keeps the whole training file
  int subset = 0;
  // used when ssl.enabled
  int labels_per_class = 5;

  bool operator==(const DatasetConfig&) const = default;
};

struct EvalConfig {
  bool mixed_pairs = false;
  int mixed_pairs_count = 1000;
  bool fgsm = false;
  double epsilon = 8.0 / 255.0;
  bool occlusion = false;
  int patch_size = 4;
  std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
  int histogram_bins = 0;  // 0 disables
  std::uint64_t mask_seed = 0;

  bool operator==(const EvalConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "run";
  std::vector<std::uint64_t> seeds{1};
  std::string out = "out";
  bool save_checkpoints = true;
  DatasetConfig dataset;
  MixConfig mixer;
  LossSpec loss;
  TrainConfig train;
  std::optional<SSLConfig> ssl;
  EvalConfig eval;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Recommended rescale operating point: t = 1, xi = 0.8 for cut-based mixing,
/// t = 0.5, xi = 1 for interpolation-based mixing.
RescaleParams default_rescale(MixPolicy policy);

/// Parses `section.key = value` lines. Unknown keys, duplicate keys and bad
/// values are ConfigErrors. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key, fixed order, reals with 17 significant digits.
std::string serialize_config(const ExperimentConfig& config);

/// Parsing skips the data-path checks so a partial file can be loaded and
/// completed in code; run_experiment requires them.
void validate(const ExperimentConfig& config, bool require_data = true);

std::string to_string(MixPolicy policy);
std::string to_string(LossKind kind);
std::string to_string(DataSource source);

/// `idx:<images>,<labels>`, `csv:<path>`, `two_moons:<n>:<noise>:<seed>`,
/// `blobs:<n>:<noise>:<seed>[:<classes>]`.
Dataset load_dataset_spec(const std::string& spec);

}  // namespace demix
