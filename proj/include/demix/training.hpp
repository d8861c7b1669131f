#pragma once

#include <limits>
#include <vector>

#include "demix/losses.hpp"
#include "demix/mixers.hpp"
#include "demix/network.hpp"

namespace demix {

struct EpochLog {
  int epoch = 0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_top1 = std::numeric_limits<double>::quiet_NaN();
  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  Parameters params;
  std::vector<EpochLog> log;  // entry 0 evaluates the initial parameters
};

NetworkSpec network_spec(const Dataset& data, const TrainConfig& config);

/// Mean clean cross-entropy over a dataset.
double clean_loss(const Parameters& params, const Dataset& data);

/// Forward, loss and backward for one batch. Applies hidden mixing when the
/// batch asks for it; the site is drawn uniformly over the network depth.
struct StepGradients {
  double loss = 0.0;
  Parameters grads;
};
StepGradients batch_gradients(const Parameters& params, const MixedBatch& batch, const LossSpec& loss, Rng& rng);

/// Deterministic in (data, configs, seed). Validation accuracy is NaN when
/// no validation set is given.
TrainResult train_supervised(const Dataset& train, const Dataset& validation, const MixConfig& mixer,
                             const LossSpec& loss, const TrainConfig& config);

/// Median of the last `window` validation accuracies (fewer if the log is short).
double median_last(const std::vector<EpochLog>& log, std::size_t window = 10);

Matrix gather_columns(const Matrix& inputs, std::span<const int> indices);

}  // namespace demix
