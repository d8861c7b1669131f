#pragma once

#include <span>
#include <vector>

#include "demix/types.hpp"

namespace demix {

/// Scalar loss plus its gradient with respect to the logits.
struct LossResult {
  double value = 0.0;
  Vector grad_logits;

  static LossResult zero(Eigen::Index classes) { return {0.0, Vector::Zero(classes)}; }
};

struct BatchLossResult {
  double value = 0.0;
  Matrix grad_logits;  // one column per sample, already scaled by 1/batch
};

struct DMConfig {
  double eta = 0.1;
  bool operator==(const DMConfig&) const = default;
};

struct RescaleParams {
  double t = 1.0;
  double xi = 1.0;
  bool operator==(const RescaleParams&) const = default;
};

enum class LossKind { mce, dm_ce, mbce_one, mbce_two, dm_bce };
enum class BceTargetMode { one, two, rescaled };

struct LossSpec {
  LossKind kind = LossKind::mce;
  DMConfig dm;
  RescaleParams rescale;
  // Optional decoupled term added on top of DM(BCE); zero leaves it pure rescaling.
  double bce_eta = 0.0;

  bool operator==(const LossSpec&) const = default;
};

Vector softmax(const Vector& logits);
double log_sum_exp(const Vector& logits);

/// log of sum_{c != excluded} exp(z_c).
double log_sum_exp_excluding(const Vector& logits, int excluded);

/// Softmax with the competitor class `excluded` removed from the denominator.
Vector decoupled_softmax(const Vector& logits, int excluded);

/// log phi(z)^{i,j}, computed in log space.
double log_decoupled_prob(const Vector& logits, int i, int j);

LossResult mce_loss(const Vector& logits, const MixedTarget& target);

/// Decoupled regularizer: -(log phi^{a,b} + log phi^{b,a}). Zero when a == b.
LossResult dm_regularizer(const Vector& logits, int class_a, int class_b);

LossResult dm_ce_loss(const Vector& logits, const MixedTarget& target, const DMConfig& config);

/// One-directional term -log phi^{a,b}: labeled class a scored with pseudo class b removed.
LossResult asymmetric_dm_loss(const Vector& logits, int labeled_class, int pseudo_class);

/// min((lambda / xi)^t, 1) with the xi = 0 and t = 0 corners saturating to 1 for lambda > 0.
double rescale(Lambda lambda, const RescaleParams& params);

LossResult mbce_loss(const Vector& logits, const Vector& targets);

Vector build_mixed_bce_targets(const MixedTarget& target, Eigen::Index classes, BceTargetMode mode,
                               const RescaleParams& params);

LossResult sample_loss(const Vector& logits, const MixedTarget& target, const LossSpec& spec);

/// Mean of per-sample losses; gradient columns scaled by 1/batch.
BatchLossResult batch_loss(const Matrix& logits, std::span<const MixedTarget> targets, const LossSpec& spec);

void validate(const LossSpec& spec);

}  // namespace demix
