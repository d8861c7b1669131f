#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace demix {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// All randomness flows through explicitly passed engines.
using Rng = std::mt19937_64;

/// Channel-major image geometry; tabular data uses channels = features, 1x1.
struct ImageShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  int pixels() const { return height * width; }
  int size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

/// Mixing ratio in [0, 1].
class Lambda {
 public:
  Lambda() = default;
  explicit Lambda(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw std::invalid_argument("lambda must lie in [0, 1]");
    }
  }
  double value() const { return value_; }
  Lambda complement() const { return Lambda(1.0 - value_); }
  bool operator==(const Lambda&) const = default;

 private:
  double value_ = 1.0;
};

/// The label record every loss consumes: classes a, b and the weight of a.
struct MixedTarget {
  int class_a = 0;
  int class_b = 0;
  Lambda lambda;

  static MixedTarget single(int label) { return {label, label, Lambda(1.0)}; }
  bool distinct() const { return class_a != class_b; }
  bool operator==(const MixedTarget&) const = default;
};

/// Inputs stored one sample per column.
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  ImageShape shape;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  Dataset subset(const std::vector<int>& indices) const;
};

}  // namespace demix
