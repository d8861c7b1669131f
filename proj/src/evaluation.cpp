#include "demix/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

#include "demix/losses.hpp"
#include "demix/mixers.hpp"

namespace demix {

namespace {

constexpr Eigen::Index kChunk = 250;

int argmax(const Eigen::Ref<const Vector>& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

double max_probability(const Vector& logits) { return softmax(logits).maxCoeff(); }

}  // namespace

int evaluation_threads() {
  const char* env = std::getenv("DEMIX_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    return std::max(1, std::stoi(env));
  } catch (const std::exception&) {
    throw std::invalid_argument("DEMIX_THREADS must be a positive integer");
  }
}

Matrix predict_chunked(const Parameters& params, const Matrix& inputs) {
  const Eigen::Index n = inputs.cols();
  Matrix logits(params.num_classes(), n);
  const Eigen::Index chunks = (n + kChunk - 1) / kChunk;
  auto run = [&](Eigen::Index first, Eigen::Index stride) {
    for (Eigen::Index c = first; c < chunks; c += stride) {
      const Eigen::Index start = c * kChunk;
      const Eigen::Index len = std::min(kChunk, n - start);
      logits.middleCols(start, len) = predict(params, inputs.middleCols(start, len));
    }
  };
  const int threads = static_cast<int>(std::min<Eigen::Index>(evaluation_threads(), std::max<Eigen::Index>(chunks, 1)));
  if (threads <= 1) {
    run(0, 1);
    return logits;
  }
  std::vector<std::jthread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
  pool.clear();
  return logits;
}

double top1_from_logits(const Matrix& logits, std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("top1: empty dataset");
  if (logits.cols() != static_cast<Eigen::Index>(labels.size())) throw std::invalid_argument("top1: size mismatch");
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    if (argmax(logits.col(i)) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double top1_accuracy(const Parameters& params, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("top1: empty dataset");
  return top1_from_logits(predict_chunked(params, data.inputs), data.labels);
}

MixedPairEval mixed_pair_from_logits(const Matrix& logits, std::span<const MixedTarget> targets) {
  if (targets.empty()) return {};
  if (logits.cols() != static_cast<Eigen::Index>(targets.size())) throw std::invalid_argument("mixed eval: size mismatch");
  if (logits.rows() < 2) throw std::invalid_argument("mixed eval: need at least two classes");
  std::size_t top1 = 0;
  std::size_t top2 = 0;
  double confidence = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const MixedTarget& t = targets[static_cast<std::size_t>(i)];
    if (!t.distinct()) throw std::invalid_argument("mixed eval: targets must pair distinct classes");
    const Vector z = logits.col(i);
    // Ties resolve to the lower index.
    int first = 0;
    for (int c = 1; c < z.size(); ++c) {
      if (z[c] > z[first]) first = c;
    }
    int second = first == 0 ? 1 : 0;
    for (int c = 0; c < z.size(); ++c) {
      if (c != first && z[c] > z[second]) second = c;
    }
    if (first == t.class_a || first == t.class_b) ++top1;
    if ((first == t.class_a && second == t.class_b) || (first == t.class_b && second == t.class_a)) ++top2;
    confidence += max_probability(z);
  }
  const auto n = static_cast<double>(targets.size());
  return {static_cast<double>(top1) / n, static_cast<double>(top2) / n, confidence / n};
}

MixedPairEval mixed_pair_eval(const Parameters& params, const MixedSet& set) {
  return mixed_pair_from_logits(predict_chunked(params, set.inputs), set.targets);
}

MixedSet make_hard_mixed_set(const Dataset& data, int count, Rng& rng) {
  if (data.size() < 2) throw std::invalid_argument("hard mixed set needs at least two samples");
  const bool has_two_classes =
      std::any_of(data.labels.begin(), data.labels.end(), [&](int l) { return l != data.labels.front(); });
  if (!has_two_classes) throw std::invalid_argument("hard mixed set needs two distinct classes");
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  MixedSet set;
  set.inputs.resize(data.inputs.rows(), count);
  set.targets.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (data.labels[b] == data.labels[a]) b = pick(rng);
    const MaskedMix mm = make_cutmix_mask(data.shape.height, data.shape.width, Lambda(0.5), rng);
    set.inputs.col(k) = apply_mask(data.inputs.col(static_cast<Eigen::Index>(a)),
                                   data.inputs.col(static_cast<Eigen::Index>(b)), mm.mask, data.shape);
    set.targets.push_back({data.labels[a], data.labels[b], mm.lambda});
  }
  return set;
}

AttackResult fgsm_attack(const Parameters& params, const Dataset& data, const AttackConfig& config) {
  if (data.empty()) throw std::invalid_argument("fgsm: empty dataset");
  if (config.epsilon < 0.0) throw std::invalid_argument("fgsm: epsilon must be nonnegative");
  const Eigen::Index n = data.inputs.cols();
  Matrix adversarial(data.inputs.rows(), n);
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const Matrix x = data.inputs.middleCols(start, len);
    const ForwardResult fr = forward(params, x);
    std::vector<MixedTarget> targets;
    targets.reserve(static_cast<std::size_t>(len));
    for (Eigen::Index i = 0; i < len; ++i) targets.push_back(MixedTarget::single(data.labels[static_cast<std::size_t>(start + i)]));
    const BatchLossResult loss = batch_loss(fr.logits, targets, LossSpec{});
    const Matrix grad = backward(params, fr.cache, loss.grad_logits, true).input_grad;
    const Matrix sign = grad.unaryExpr([](double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); });
    adversarial.middleCols(start, len) = (x + config.epsilon * sign).cwiseMax(config.low).cwiseMin(config.high);
  }
  AttackResult out;
  out.clean_accuracy = top1_accuracy(params, data);
  out.adversarial_accuracy = top1_from_logits(predict_chunked(params, adversarial), data.labels);
  out.error_rate = 1.0 - out.adversarial_accuracy;
  return out;
}

int patch_count(const ImageShape& shape, int patch_size) {
  if (patch_size < 1 || shape.height % patch_size != 0 || shape.width % patch_size != 0) {
    throw std::invalid_argument("patch size " + std::to_string(patch_size) + " does not tile " +
                                std::to_string(shape.height) + "x" + std::to_string(shape.width));
  }
  return (shape.height / patch_size) * (shape.width / patch_size);
}

int masked_patch_count(double ratio, int total_patches) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("occlusion ratio must lie in [0, 1]");
  // Tolerate ratios like 0.3 * 10 landing just below an integer.
  return std::min(total_patches, static_cast<int>(std::floor(ratio * total_patches + 1e-9)));
}

std::vector<OcclusionPoint> occlusion_eval(const Parameters& params, const Dataset& data,
                                           const OcclusionConfig& config, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("occlusion: empty dataset");
  const int total = patch_count(data.shape, config.patch_size);
  const int grid_w = data.shape.width / config.patch_size;
  std::vector<OcclusionPoint> out;
  for (double ratio : config.ratios) {
    const int masked = masked_patch_count(ratio, total);
    Matrix occluded = data.inputs;
    if (masked > 0) {
      for (Eigen::Index i = 0; i < occluded.cols(); ++i) {
        const std::vector<int> order = random_permutation(total, rng);
        for (int k = 0; k < masked; ++k) {
          const int py = order[static_cast<std::size_t>(k)] / grid_w;
          const int px = order[static_cast<std::size_t>(k)] % grid_w;
          for (int c = 0; c < data.shape.channels; ++c) {
            for (int y = py * config.patch_size; y < (py + 1) * config.patch_size; ++y) {
              for (int x = px * config.patch_size; x < (px + 1) * config.patch_size; ++x) {
                occluded((c * data.shape.height + y) * data.shape.width + x, i) = 0.0;
              }
            }
          }
        }
      }
    }
    out.push_back({ratio, masked, top1_from_logits(predict_chunked(params, occluded), data.labels)});
  }
  return out;
}

std::vector<std::size_t> confidence_histogram_from_logits(const Matrix& logits, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const double p = max_probability(logits.col(i));
    const int bin = std::min(bins - 1, static_cast<int>(std::floor(p * bins)));
    ++counts[static_cast<std::size_t>(std::max(bin, 0))];
  }
  return counts;
}

std::vector<std::size_t> confidence_histogram(const Parameters& params, const Dataset& data, int bins) {
  return confidence_histogram_from_logits(predict_chunked(params, data.inputs), bins);
}

}  // namespace demix
