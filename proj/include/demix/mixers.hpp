#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "demix/types.hpp"

namespace demix {

enum class MixPolicy { none, linear, cutmix, manifold, resizemix };

struct MixConfig {
  MixPolicy policy = MixPolicy::linear;
  double alpha = 0.2;
  bool per_batch_lambda = true;
  // Overrides sampling; used for hard-sample construction and boundary checks.
  std::optional<double> fixed_lambda;

  bool operator==(const MixConfig&) const = default;
};

/// Spatial mask H for cut-based mixing. Value 1 keeps x_a, 0 takes x_b.
struct MixMask {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major

  double mean() const;
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct MaskedMix {
  MixMask mask;
  Lambda lambda;  // realized, == mask.mean()
};

struct ResizeMixResult {
  Vector image;
  MixMask mask;
  Lambda lambda;
};

struct MixedBatch {
  Matrix inputs;
  std::vector<MixedTarget> targets;
  std::vector<int> pairing;
  // Set for the manifold policy: the network performs the mix.
  std::optional<Lambda> hidden_lambda;
};

/// Beta(alpha, alpha) draw built from two Gamma(alpha) draws.
Lambda sample_lambda(double alpha, Rng& rng);

/// Gamma(shape, 1) via Marsaglia-Tsang, boosted by U^(1/shape) when shape < 1.
double sample_gamma(double shape, Rng& rng);

/// Coefficients (w_a, w_b) with w_a + w_b == 1 exactly. The larger side is
/// computed first, so mix(x_a, x_b, l) and mix(x_b, x_a, 1 - l) agree bitwise.
std::pair<double, double> mix_weights(Lambda lambda);

Vector mix_linear(const Vector& x_a, const Vector& x_b, Lambda lambda);

/// Box with side sqrt(1 - lambda) * dim centred at (center_y, center_x), clipped.
MaskedMix cutmix_mask_at(int height, int width, Lambda lambda, int center_y, int center_x);
MaskedMix make_cutmix_mask(int height, int width, Lambda lambda, Rng& rng);

Vector apply_mask(const Vector& x_a, const Vector& x_b, const MixMask& mask, const ImageShape& shape);

/// Nearest-neighbour resize of a channel-major image.
Vector resize_nearest(const Vector& image, const ImageShape& from, int height, int width);

ResizeMixResult resizemix_at(const Vector& x_a, const Vector& x_b, const ImageShape& shape, Lambda lambda,
                             int top, int left);
ResizeMixResult make_resizemix(const Vector& x_a, const Vector& x_b, const ImageShape& shape, Lambda lambda,
                               Rng& rng);

std::vector<int> random_permutation(int n, Rng& rng);

MixedBatch mix_batch(const Matrix& inputs, std::span<const int> labels, const ImageShape& shape,
                     const MixConfig& config, Rng& rng);
MixedBatch mix_batch_with_pairing(const Matrix& inputs, std::span<const int> labels, const ImageShape& shape,
                                  const MixConfig& config, std::span<const int> pairing, Rng& rng);

struct AsymmetricMix {
  Vector input;
  Lambda lambda;  // coefficient of the labeled sample, <= 0.5
};

/// Labeled/unlabeled mix where the labeled sample always gets min(lambda, 1 - lambda).
AsymmetricMix asymmetric_pair(const Vector& labeled, const Vector& unlabeled, Lambda lambda);

bool is_permutation(std::span<const int> pairing);

}  // namespace demix
