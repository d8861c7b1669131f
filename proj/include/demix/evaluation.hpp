#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "demix/network.hpp"
#include "demix/types.hpp"

namespace demix {

struct MixedPairEval {
  double top1_pair_acc = 0.0;  // argmax in {a, b}
  double top2_pair_acc = 0.0;  // top-2 set equals {a, b}
  double mean_max_confidence = 0.0;
};

struct MixedSet {
  Matrix inputs;
  std::vector<MixedTarget> targets;
};

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double low = 0.0;
  double high = 1.0;
};

struct AttackResult {
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
  double error_rate = 0.0;
};

struct OcclusionConfig {
  int patch_size = 4;
  std::vector<double> ratios;
};

struct OcclusionPoint {
  double ratio = 0.0;
  int masked_patches = 0;
  double accuracy = 0.0;
};

/// Evaluation parallelism from DEMIX_THREADS (default 1).
int evaluation_threads();

/// Logits computed in fixed-size chunks; identical output for any thread count.
Matrix predict_chunked(const Parameters& params, const Matrix& inputs);

double top1_from_logits(const Matrix& logits, std::span<const int> labels);
double top1_accuracy(const Parameters& params, const Dataset& data);

MixedPairEval mixed_pair_from_logits(const Matrix& logits, std::span<const MixedTarget> targets);
MixedPairEval mixed_pair_eval(const Parameters& params, const MixedSet& set);

/// CutMix at lambda = 0.5 over randomly drawn class-distinct pairs.
MixedSet make_hard_mixed_set(const Dataset& data, int count, Rng& rng);

/// x_adv = clip(x + eps * sign(grad_x CE)); sign(0) = 0.
AttackResult fgsm_attack(const Parameters& params, const Dataset& data, const AttackConfig& config);

/// Number of patches in the grid; throws when patch_size does not tile the image.
int patch_count(const ImageShape& shape, int patch_size);
int masked_patch_count(double ratio, int total_patches);
std::vector<OcclusionPoint> occlusion_eval(const Parameters& params, const Dataset& data,
                                           const OcclusionConfig& config, Rng& rng);

/// Bins are half-open [k/bins, (k+1)/bins); p = 1 lands in the last bin.
std::vector<std::size_t> confidence_histogram_from_logits(const Matrix& logits, int bins);
std::vector<std::size_t> confidence_histogram(const Parameters& params, const Dataset& data, int bins);

}  // namespace demix
