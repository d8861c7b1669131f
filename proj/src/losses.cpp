#include "demix/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace demix {

namespace {

void check_class(const Vector& logits, int c) {
  if (c < 0 || c >= logits.size()) throw std::out_of_range("class index out of range");
}

void check_target(const Vector& logits, const MixedTarget& target) {
  if (logits.size() < 2) throw std::invalid_argument("need at least two classes");
  check_class(logits, target.class_a);
  check_class(logits, target.class_b);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

double log_sum_exp(const Vector& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

double log_sum_exp_excluding(const Vector& logits, int excluded) {
  check_class(logits, excluded);
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < logits.size(); ++c) {
    if (c != excluded) m = std::max(m, logits[c]);
  }
  double sum = 0.0;
  for (Eigen::Index c = 0; c < logits.size(); ++c) {
    if (c != excluded) sum += std::exp(logits[c] - m);
  }
  return m + std::log(sum);
}

Vector decoupled_softmax(const Vector& logits, int excluded) {
  const double lse = log_sum_exp_excluding(logits, excluded);
  return (logits.array() - lse).exp();
}

double log_decoupled_prob(const Vector& logits, int i, int j) {
  check_class(logits, i);
  return logits[i] - log_sum_exp_excluding(logits, j);
}

LossResult mce_loss(const Vector& logits, const MixedTarget& target) {
  check_target(logits, target);
  const double lse = log_sum_exp(logits);
  const double w_a = target.lambda.value();
  const double w_b = 1.0 - w_a;
  LossResult out;
  out.grad_logits = (logits.array() - lse).exp();
  if (target.class_a == target.class_b) {
    out.value = lse - logits[target.class_a];
    out.grad_logits[target.class_a] -= 1.0;
    return out;
  }
  out.value = -(w_a * (logits[target.class_a] - lse) + w_b * (logits[target.class_b] - lse));
  out.grad_logits[target.class_a] -= w_a;
  out.grad_logits[target.class_b] -= w_b;
  return out;
}

LossResult dm_regularizer(const Vector& logits, int class_a, int class_b) {
  check_class(logits, class_a);
  check_class(logits, class_b);
  if (class_a == class_b) return LossResult::zero(logits.size());
  const double lse_not_b = log_sum_exp_excluding(logits, class_b);
  const double lse_not_a = log_sum_exp_excluding(logits, class_a);
  LossResult out;
  out.value = -((logits[class_a] - lse_not_b) + (logits[class_b] - lse_not_a));
  const Vector phi_not_b = (logits.array() - lse_not_b).exp();
  const Vector phi_not_a = (logits.array() - lse_not_a).exp();
  out.grad_logits = phi_not_b + phi_not_a;
  // phi^{a,a} and phi^{b,b} do not appear: a is excluded from one sum, b from the other.
  out.grad_logits[class_a] = -1.0 + phi_not_b[class_a];
  out.grad_logits[class_b] = -1.0 + phi_not_a[class_b];
  return out;
}

LossResult dm_ce_loss(const Vector& logits, const MixedTarget& target, const DMConfig& config) {
  if (config.eta < 0.0) throw std::invalid_argument("eta must be nonnegative");
  LossResult out = mce_loss(logits, target);
  if (config.eta == 0.0 || !target.distinct()) return out;
  const LossResult dm = dm_regularizer(logits, target.class_a, target.class_b);
  out.value += config.eta * dm.value;
  out.grad_logits += config.eta * dm.grad_logits;
  return out;
}

LossResult asymmetric_dm_loss(const Vector& logits, int labeled_class, int pseudo_class) {
  check_class(logits, labeled_class);
  check_class(logits, pseudo_class);
  if (labeled_class == pseudo_class) return LossResult::zero(logits.size());
  const double lse_not_b = log_sum_exp_excluding(logits, pseudo_class);
  LossResult out;
  out.value = -(logits[labeled_class] - lse_not_b);
  out.grad_logits = (logits.array() - lse_not_b).exp();
  out.grad_logits[labeled_class] -= 1.0;
  out.grad_logits[pseudo_class] = 0.0;
  return out;
}

double rescale(Lambda lambda, const RescaleParams& params) {
  if (params.t < 0.0) throw std::invalid_argument("rescale: t must be nonnegative");
  if (params.xi < 0.0 || params.xi > 1.0) throw std::invalid_argument("rescale: xi must lie in [0, 1]");
  const double l = lambda.value();
  if (l == 0.0) return 0.0;
  if (params.xi == 0.0 || params.t == 0.0) return 1.0;
  if (l >= params.xi) return 1.0;
  return std::min(std::pow(l / params.xi, params.t), 1.0);
}

LossResult mbce_loss(const Vector& logits, const Vector& targets) {
  if (logits.size() != targets.size()) throw std::invalid_argument("mbce: target length mismatch");
  LossResult out{0.0, Vector(logits.size())};
  for (Eigen::Index c = 0; c < logits.size(); ++c) {
    const double t = targets[c];
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("mbce: targets must lie in [0, 1]");
    const double z = logits[c];
    // -[t log s(z) + (1 - t) log(1 - s(z))] = t softplus(-z) + (1 - t) softplus(z)
    out.value += t * softplus(-z) + (1.0 - t) * softplus(z);
    out.grad_logits[c] = sigmoid(z) - t;
  }
  return out;
}

Vector build_mixed_bce_targets(const MixedTarget& target, Eigen::Index classes, BceTargetMode mode,
                               const RescaleParams& params) {
  if (target.class_a < 0 || target.class_a >= classes || target.class_b < 0 || target.class_b >= classes) {
    throw std::out_of_range("class index out of range");
  }
  Vector t = Vector::Zero(classes);
  if (!target.distinct()) {
    t[target.class_a] = 1.0;
    return t;
  }
  switch (mode) {
    case BceTargetMode::one:
      t[target.class_a] = target.lambda.value();
      t[target.class_b] = 1.0 - target.lambda.value();
      break;
    case BceTargetMode::two:
      t[target.class_a] = 1.0;
      t[target.class_b] = 1.0;
      break;
    case BceTargetMode::rescaled:
      t[target.class_a] = rescale(target.lambda, params);
      t[target.class_b] = rescale(target.lambda.complement(), params);
      break;
  }
  return t;
}

void validate(const LossSpec& spec) {
  if (spec.dm.eta < 0.0) throw std::invalid_argument("eta must be nonnegative");
  if (spec.bce_eta < 0.0) throw std::invalid_argument("bce_eta must be nonnegative");
  if (spec.rescale.t < 0.0) throw std::invalid_argument("rescale t must be nonnegative");
  if (spec.rescale.xi < 0.0 || spec.rescale.xi > 1.0) throw std::invalid_argument("rescale xi must lie in [0, 1]");
}

LossResult sample_loss(const Vector& logits, const MixedTarget& target, const LossSpec& spec) {
  switch (spec.kind) {
    case LossKind::mce:
      return mce_loss(logits, target);
    case LossKind::dm_ce:
      return dm_ce_loss(logits, target, spec.dm);
    case LossKind::mbce_one:
      return mbce_loss(logits, build_mixed_bce_targets(target, logits.size(), BceTargetMode::one, spec.rescale));
    case LossKind::mbce_two:
      return mbce_loss(logits, build_mixed_bce_targets(target, logits.size(), BceTargetMode::two, spec.rescale));
    case LossKind::dm_bce: {
      LossResult out =
          mbce_loss(logits, build_mixed_bce_targets(target, logits.size(), BceTargetMode::rescaled, spec.rescale));
      if (spec.bce_eta > 0.0 && target.distinct()) {
        const LossResult dm = dm_regularizer(logits, target.class_a, target.class_b);
        out.value += spec.bce_eta * dm.value;
        out.grad_logits += spec.bce_eta * dm.grad_logits;
      }
      return out;
    }
  }
  throw std::logic_error("unhandled loss kind");
}

BatchLossResult batch_loss(const Matrix& logits, std::span<const MixedTarget> targets, const LossSpec& spec) {
  const auto n = static_cast<Eigen::Index>(targets.size());
  if (n == 0) throw std::invalid_argument("batch_loss: empty batch");
  if (logits.cols() != n) throw std::invalid_argument("batch_loss: logits and targets disagree");
  BatchLossResult out{0.0, Matrix(logits.rows(), n)};
  const double scale = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const LossResult r = sample_loss(logits.col(i), targets[static_cast<std::size_t>(i)], spec);
    out.value += r.value;
    out.grad_logits.col(i) = r.grad_logits * scale;
  }
  out.value *= scale;
  return out;
}

}  // namespace demix
