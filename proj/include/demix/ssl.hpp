#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "demix/network.hpp"
#include "demix/training.hpp"

namespace demix {

struct SSLConfig {
  double tau = 0.95;
  double unlabeled_weight = 1.0;
  double eta = 0.1;
  double alpha = 1.0;
  int steps = 2000;
  bool asymmetric_mix = true;
  int unlabeled_batch = 64;
  int eval_interval = 100;
  std::optional<double> fixed_lambda;

  bool operator==(const SSLConfig&) const = default;
};

void validate(const SSLConfig& config);

struct PseudoLabel {
  int class_index = 0;
  double confidence = 0.0;
  bool accepted = false;
};

/// Hard argmax label; accepted iff the max softmax probability reaches tau.
PseudoLabel pseudo_label(const Vector& logits, double tau);

struct AsymmetricPairRecord {
  int labeled_class = 0;
  int pseudo_class = 0;
  double labeled_coefficient = 0.0;
};

struct SslStepMetrics {
  double loss = 0.0;
  double labeled_loss = 0.0;
  std::vector<PseudoLabel> pseudo_labels;
  std::vector<AsymmetricPairRecord> pairs;

  std::size_t accepted() const;
};

/// One update: CE(labeled) + w * [CE(accepted pseudo) + sum over pairs of
/// MCE(asymmetric mix) + eta * asymmetric DM]. Pseudo-label terms are averaged
/// over the unlabeled batch, pair terms over the labeled batch. `rng` drives
/// pairing and lambda draws only.
SslStepMetrics ssl_step(Parameters& params, SgdState& state, const Matrix& labeled_x, std::span<const int> labeled_y,
                        const Matrix& unlabeled_x, const SSLConfig& config, const TrainConfig& train, long step,
                        long total_steps, Rng& rng);

struct SslLogEntry {
  int step = 0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  double accepted_fraction = 0.0;
  bool operator==(const SslLogEntry&) const = default;
};

struct SslResult {
  Parameters params;
  std::vector<SslLogEntry> log;  // entry 0 evaluates the initial parameters
  double best_test_acc = 0.0;
};

/// Labeled batches follow the same shuffled-epoch order as train_supervised, so
/// with unlabeled_weight = 0 the two produce identical logs.
SslResult train_ssl(const Dataset& labeled, const Dataset& unlabeled, const Dataset& test, const SSLConfig& config,
                    const TrainConfig& train);

}  // namespace demix
