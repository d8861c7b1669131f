#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "demix/types.hpp"

namespace demix {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagicError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class TruncatedFileError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class CountMismatchError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// MNIST-format IDX pair. Pixels are scaled to [0, 1]; classes = max label + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes pixels (rounded from [0, 1] to bytes) and labels as an IDX pair.
void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

/// Rows of `label,feature_0,feature_1,...`; an optional non-numeric header row is skipped.
Dataset load_csv(const std::filesystem::path& path);

enum class SyntheticKind { blobs, two_moons };

/// Blobs: classes at fixed centres on the unit circle scaled by 2. Two moons:
/// unit half-circles, the second shifted by (1, 0.5) and flipped.
Dataset make_synthetic(SyntheticKind kind, int n, double noise, std::uint64_t seed, int classes = 2);

/// First `count` samples, or all of them if the set is smaller.
Dataset take_first(const Dataset& data, std::size_t count);

/// Balanced split: `per_class` labeled samples of every class, the rest unlabeled.
struct LabeledSplit {
  Dataset labeled;
  Dataset unlabeled;
};
LabeledSplit split_labeled(const Dataset& data, int per_class, Rng& rng);

}  // namespace demix
