#include "demix/mixers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace demix {

double MixMask::mean() const {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma shape must be positive");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    double u = uniform(rng);
    while (u == 0.0) u = uniform(rng);
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    double x = normal(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform(rng);
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Lambda sample_lambda(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  for (;;) {
    const double x = sample_gamma(alpha, rng);
    const double y = sample_gamma(alpha, rng);
    const double total = x + y;
    // Both gammas can underflow to zero for tiny alpha; redraw.
    if (total > 0.0 && std::isfinite(total)) return Lambda(std::clamp(x / total, 0.0, 1.0));
  }
}

std::pair<double, double> mix_weights(Lambda lambda) {
  const double l = lambda.value();
  if (l >= 0.5) return {l, 1.0 - l};
  const double w_b = 1.0 - l;
  return {1.0 - w_b, w_b};
}

Vector mix_linear(const Vector& x_a, const Vector& x_b, Lambda lambda) {
  if (x_a.size() != x_b.size()) throw std::invalid_argument("mix_linear: shape mismatch");
  const auto [w_a, w_b] = mix_weights(lambda);
  // Equal entries pass through untouched so mixing a sample with itself is exact.
  return (x_a.array() == x_b.array()).select(x_a.array(), w_a * x_a.array() + w_b * x_b.array());
}

MaskedMix cutmix_mask_at(int height, int width, Lambda lambda, int center_y, int center_x) {
  if (height < 1 || width < 1) throw std::invalid_argument("cutmix: empty image");
  MixMask mask{height, width, std::vector<double>(static_cast<std::size_t>(height) * width, 1.0)};
  const double ratio = std::sqrt(1.0 - lambda.value());
  const int cut_h = static_cast<int>(height * ratio);
  const int cut_w = static_cast<int>(width * ratio);
  const int y0 = std::clamp(center_y - cut_h / 2, 0, height);
  const int y1 = std::clamp(center_y + cut_h - cut_h / 2, 0, height);
  const int x0 = std::clamp(center_x - cut_w / 2, 0, width);
  const int x1 = std::clamp(center_x + cut_w - cut_w / 2, 0, width);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) mask.values[static_cast<std::size_t>(y) * width + x] = 0.0;
  }
  const double realized = mask.mean();
  return {std::move(mask), Lambda(realized)};
}

MaskedMix make_cutmix_mask(int height, int width, Lambda lambda, Rng& rng) {
  if (height < 1 || width < 1) throw std::invalid_argument("cutmix: empty image");
  std::uniform_int_distribution<int> ys(0, height - 1);
  std::uniform_int_distribution<int> xs(0, width - 1);
  const int cy = ys(rng);
  const int cx = xs(rng);
  return cutmix_mask_at(height, width, lambda, cy, cx);
}

Vector apply_mask(const Vector& x_a, const Vector& x_b, const MixMask& mask, const ImageShape& shape) {
  if (x_a.size() != x_b.size() || x_a.size() != shape.size()) {
    throw std::invalid_argument("apply_mask: input size does not match shape");
  }
  if (mask.height != shape.height || mask.width != shape.width) {
    throw std::invalid_argument("apply_mask: mask does not match spatial dims");
  }
  Vector out(x_a.size());
  const int plane = shape.pixels();
  for (int c = 0; c < shape.channels; ++c) {
    for (int p = 0; p < plane; ++p) {
      const int idx = c * plane + p;
      const double h = mask.values[static_cast<std::size_t>(p)];
      out[idx] = h * x_a[idx] + (1.0 - h) * x_b[idx];
    }
  }
  return out;
}

Vector resize_nearest(const Vector& image, const ImageShape& from, int height, int width) {
  if (image.size() != from.size()) throw std::invalid_argument("resize: image does not match shape");
  Vector out(static_cast<Eigen::Index>(from.channels) * height * width);
  for (int c = 0; c < from.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const int sy = y * from.height / height;
      for (int x = 0; x < width; ++x) {
        const int sx = x * from.width / width;
        out[(c * height + y) * width + x] = image[(c * from.height + sy) * from.width + sx];
      }
    }
  }
  return out;
}

namespace {

std::pair<int, int> resizemix_box(const ImageShape& shape, Lambda lambda) {
  const double ratio = std::sqrt(1.0 - lambda.value());
  return {static_cast<int>(shape.height * ratio), static_cast<int>(shape.width * ratio)};
}

}  // namespace

ResizeMixResult resizemix_at(const Vector& x_a, const Vector& x_b, const ImageShape& shape, Lambda lambda,
                             int top, int left) {
  if (x_a.size() != shape.size() || x_b.size() != shape.size()) {
    throw std::invalid_argument("resizemix: images must match shape");
  }
  const auto [box_h, box_w] = resizemix_box(shape, lambda);
  MixMask mask{shape.height, shape.width,
               std::vector<double>(static_cast<std::size_t>(shape.pixels()), 1.0)};
  Vector out = x_a;
  if (box_h > 0 && box_w > 0) {
    if (top < 0 || left < 0 || top + box_h > shape.height || left + box_w > shape.width) {
      throw std::invalid_argument("resizemix: paste box outside image");
    }
    const Vector small = resize_nearest(x_b, shape, box_h, box_w);
    for (int c = 0; c < shape.channels; ++c) {
      for (int y = 0; y < box_h; ++y) {
        for (int x = 0; x < box_w; ++x) {
          out[(c * shape.height + top + y) * shape.width + left + x] = small[(c * box_h + y) * box_w + x];
        }
      }
    }
    for (int y = 0; y < box_h; ++y) {
      for (int x = 0; x < box_w; ++x) {
        mask.values[static_cast<std::size_t>(top + y) * shape.width + left + x] = 0.0;
      }
    }
  }
  const double realized = mask.mean();
  return {std::move(out), std::move(mask), Lambda(realized)};
}

ResizeMixResult make_resizemix(const Vector& x_a, const Vector& x_b, const ImageShape& shape, Lambda lambda,
                               Rng& rng) {
  const auto [box_h, box_w] = resizemix_box(shape, lambda);
  std::uniform_int_distribution<int> tops(0, shape.height - box_h);
  std::uniform_int_distribution<int> lefts(0, shape.width - box_w);
  const int top = tops(rng);
  const int left = lefts(rng);
  return resizemix_at(x_a, x_b, shape, lambda, top, left);
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

bool is_permutation(std::span<const int> pairing) {
  std::vector<char> seen(pairing.size(), 0);
  for (int p : pairing) {
    if (p < 0 || static_cast<std::size_t>(p) >= pairing.size() || seen[static_cast<std::size_t>(p)]) return false;
    seen[static_cast<std::size_t>(p)] = 1;
  }
  return true;
}

MixedBatch mix_batch(const Matrix& inputs, std::span<const int> labels, const ImageShape& shape,
                     const MixConfig& config, Rng& rng) {
  if (labels.empty()) throw std::invalid_argument("mix_batch: empty batch");
  if (config.policy == MixPolicy::none) {
    std::vector<int> identity(labels.size());
    std::iota(identity.begin(), identity.end(), 0);
    return mix_batch_with_pairing(inputs, labels, shape, config, identity, rng);
  }
  const auto pairing = random_permutation(static_cast<int>(labels.size()), rng);
  return mix_batch_with_pairing(inputs, labels, shape, config, pairing, rng);
}

MixedBatch mix_batch_with_pairing(const Matrix& inputs, std::span<const int> labels, const ImageShape& shape,
                                  const MixConfig& config, std::span<const int> pairing, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (n == 0) throw std::invalid_argument("mix_batch: empty batch");
  if (inputs.cols() != n) throw std::invalid_argument("mix_batch: inputs and labels disagree");
  if (pairing.size() != labels.size() || !is_permutation(pairing)) {
    throw std::invalid_argument("mix_batch: pairing is not a permutation");
  }
  if (!(config.alpha > 0.0)) throw std::invalid_argument("mix_batch: alpha must be positive");

  MixedBatch out;
  out.pairing.assign(pairing.begin(), pairing.end());
  out.targets.reserve(labels.size());

  if (config.policy == MixPolicy::none) {
    out.inputs = inputs;
    for (int label : labels) out.targets.push_back(MixedTarget::single(label));
    return out;
  }

  auto draw = [&]() { return config.fixed_lambda ? Lambda(*config.fixed_lambda) : sample_lambda(config.alpha, rng); };

  if (config.policy == MixPolicy::manifold) {
    if (!config.per_batch_lambda) throw std::invalid_argument("manifold mixing needs one lambda per batch");
    const Lambda lambda = draw();
    out.inputs = inputs;
    out.hidden_lambda = lambda;
    for (Eigen::Index i = 0; i < n; ++i) {
      out.targets.push_back({labels[i], labels[pairing[i]], lambda});
    }
    return out;
  }

  out.inputs.resize(inputs.rows(), n);
  const Lambda batch_lambda = draw();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Lambda requested = config.per_batch_lambda ? batch_lambda : draw();
    const Vector x_a = inputs.col(i);
    const Vector x_b = inputs.col(pairing[i]);
    Lambda realized = requested;
    switch (config.policy) {
      case MixPolicy::linear:
        out.inputs.col(i) = mix_linear(x_a, x_b, requested);
        break;
      case MixPolicy::cutmix: {
        const MaskedMix mm = make_cutmix_mask(shape.height, shape.width, requested, rng);
        out.inputs.col(i) = apply_mask(x_a, x_b, mm.mask, shape);
        realized = mm.lambda;
        break;
      }
      case MixPolicy::resizemix: {
        const ResizeMixResult rm = make_resizemix(x_a, x_b, shape, requested, rng);
        out.inputs.col(i) = rm.image;
        realized = rm.lambda;
        break;
      }
      default:
        throw std::logic_error("unhandled mix policy");
    }
    out.targets.push_back({labels[i], labels[pairing[i]], realized});
  }
  return out;
}

AsymmetricMix asymmetric_pair(const Vector& labeled, const Vector& unlabeled, Lambda lambda) {
  if (labeled.size() != unlabeled.size()) throw std::invalid_argument("asymmetric_pair: shape mismatch");
  const Lambda effective(std::min(lambda.value(), 1.0 - lambda.value()));
  return {mix_linear(labeled, unlabeled, effective), effective};
}

}  // namespace demix
