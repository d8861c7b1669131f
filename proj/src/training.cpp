#include "demix/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "demix/evaluation.hpp"

namespace demix {

NetworkSpec network_spec(const Dataset& data, const TrainConfig& config) {
  return {config.architecture, data.shape, config.hidden, data.num_classes};
}

Matrix gather_columns(const Matrix& inputs, std::span<const int> indices) {
  Matrix out(inputs.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = inputs.col(indices[i]);
  return out;
}

double clean_loss(const Parameters& params, const Dataset& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Matrix logits = predict_chunked(params, data.inputs);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    total += mce_loss(logits.col(i), MixedTarget::single(data.labels[static_cast<std::size_t>(i)])).value;
  }
  return total / static_cast<double>(data.size());
}

StepGradients batch_gradients(const Parameters& params, const MixedBatch& batch, const LossSpec& loss, Rng& rng) {
  ForwardResult fr;
  if (batch.hidden_lambda) {
    std::uniform_int_distribution<int> site(0, static_cast<int>(params.layers.size()) - 1);
    HiddenMixSpec spec{site(rng), *batch.hidden_lambda, batch.pairing};
    fr = forward_manifold_mix(params, batch.inputs, spec);
  } else {
    fr = forward(params, batch.inputs);
  }
  const BatchLossResult bl = batch_loss(fr.logits, batch.targets, loss);
  return {bl.value, backward(params, fr.cache, bl.grad_logits, false).grads};
}

TrainResult train_supervised(const Dataset& train, const Dataset& validation, const MixConfig& mixer,
                             const LossSpec& loss, const TrainConfig& config) {
  if (train.empty()) throw std::invalid_argument("train_supervised: empty dataset");
  validate(config);
  validate(loss);
  Rng rng(config.seed);
  TrainResult result;
  result.params = initialize(network_spec(train, config), rng);
  SgdState state = make_sgd_state(result.params);

  auto val_acc = [&]() {
    return validation.empty() ? std::numeric_limits<double>::quiet_NaN() : top1_accuracy(result.params, validation);
  };
  result.log.push_back({0, clean_loss(result.params, train), val_acc()});

  const int n = static_cast<int>(train.size());
  const long batches = (n + config.batch_size - 1) / config.batch_size;
  const long total_steps = batches * config.epochs;
  long step = 0;
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (long b = 0; b < batches; ++b) {
      const auto first = static_cast<std::size_t>(b * config.batch_size);
      const auto last = std::min(order.size(), first + static_cast<std::size_t>(config.batch_size));
      const std::span<const int> idx(order.data() + first, last - first);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (int i : idx) labels.push_back(train.labels[static_cast<std::size_t>(i)]);
      const MixedBatch mixed = mix_batch(gather_columns(train.inputs, idx), labels, train.shape, mixer, rng);
      const StepGradients sg = batch_gradients(result.params, mixed, loss, rng);
      sgd_step(result.params, sg.grads, state, step++, total_steps, config);
      epoch_loss += sg.loss;
    }
    result.log.push_back({epoch, epoch_loss / static_cast<double>(batches), val_acc()});
  }
  return result;
}

double median_last(const std::vector<EpochLog>& log, std::size_t window) {
  if (log.empty()) throw std::invalid_argument("median_last: empty log");
  const std::size_t take = std::min(window, log.size());
  std::vector<double> tail;
  for (std::size_t i = log.size() - take; i < log.size(); ++i) tail.push_back(log[i].val_top1);
  std::sort(tail.begin(), tail.end());
  if (take % 2 == 1) return tail[take / 2];
  return 0.5 * (tail[take / 2 - 1] + tail[take / 2]);
}

}  // namespace demix
