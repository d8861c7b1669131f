#include "demix/ssl.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "demix/evaluation.hpp"
#include "demix/losses.hpp"

namespace demix {

namespace {

// Independent stream for everything that touches unlabeled data.
constexpr std::uint64_t kUnlabeledStreamSalt = 0x9e3779b97f4a7c15ULL;

}  // namespace

void validate(const SSLConfig& config) {
  if (!(config.tau > 0.0 && config.tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (config.unlabeled_weight < 0.0) throw std::invalid_argument("unlabeled_weight must be nonnegative");
  if (config.eta < 0.0) throw std::invalid_argument("eta must be nonnegative");
  if (!(config.alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (config.steps < 0) throw std::invalid_argument("steps must be nonnegative");
  if (config.unlabeled_batch < 1) throw std::invalid_argument("unlabeled_batch must be positive");
  if (config.eval_interval < 1) throw std::invalid_argument("eval_interval must be positive");
  if (config.fixed_lambda) Lambda check(*config.fixed_lambda);
}

PseudoLabel pseudo_label(const Vector& logits, double tau) {
  const Vector p = softmax(logits);
  Eigen::Index best = 0;
  const double confidence = p.maxCoeff(&best);
  return {static_cast<int>(best), confidence, confidence >= tau};
}

std::size_t SslStepMetrics::accepted() const {
  return static_cast<std::size_t>(
      std::count_if(pseudo_labels.begin(), pseudo_labels.end(), [](const PseudoLabel& p) { return p.accepted; }));
}

SslStepMetrics ssl_step(Parameters& params, SgdState& state, const Matrix& labeled_x, std::span<const int> labeled_y,
                        const Matrix& unlabeled_x, const SSLConfig& config, const TrainConfig& train, long step,
                        long total_steps, Rng& rng) {
  if (labeled_y.empty()) throw std::invalid_argument("ssl_step: empty labeled batch");
  SslStepMetrics metrics;

  MixConfig plain;
  plain.policy = MixPolicy::none;
  const MixedBatch labeled = mix_batch(labeled_x, labeled_y, ImageShape{}, plain, rng);
  StepGradients total = batch_gradients(params, labeled, LossSpec{}, rng);
  metrics.labeled_loss = total.loss;

  const double w = config.unlabeled_weight;
  if (w > 0.0 && unlabeled_x.cols() > 0) {
    const auto n_u = unlabeled_x.cols();
    const ForwardResult fu = forward(params, unlabeled_x);
    Matrix grad_u = Matrix::Zero(fu.logits.rows(), n_u);
    double loss_u = 0.0;
    std::vector<int> accepted;
    metrics.pseudo_labels.reserve(static_cast<std::size_t>(n_u));
    for (Eigen::Index j = 0; j < n_u; ++j) {
      const PseudoLabel pl = pseudo_label(fu.logits.col(j), config.tau);
      metrics.pseudo_labels.push_back(pl);
      if (!pl.accepted) continue;
      accepted.push_back(static_cast<int>(j));
      const LossResult r = mce_loss(fu.logits.col(j), MixedTarget::single(pl.class_index));
      loss_u += r.value;
      grad_u.col(j) = r.grad_logits;
    }
    if (!accepted.empty()) {
      const double scale_u = 1.0 / static_cast<double>(n_u);
      grad_u *= scale_u;
      accumulate(total.grads, backward(params, fu.cache, grad_u, false).grads, w);
      total.loss += w * loss_u * scale_u;

      if (config.asymmetric_mix) {
        const auto n_l = labeled_x.cols();
        Matrix mixed(labeled_x.rows(), n_l);
        std::vector<MixedTarget> targets;
        std::uniform_int_distribution<std::size_t> pick(0, accepted.size() - 1);
        for (Eigen::Index i = 0; i < n_l; ++i) {
          const int j = accepted[pick(rng)];
          const Lambda drawn = config.fixed_lambda ? Lambda(*config.fixed_lambda) : sample_lambda(config.alpha, rng);
          const AsymmetricMix am = asymmetric_pair(labeled_x.col(i), unlabeled_x.col(j), drawn);
          mixed.col(i) = am.input;
          const int a = labeled_y[static_cast<std::size_t>(i)];
          const int b = metrics.pseudo_labels[static_cast<std::size_t>(j)].class_index;
          targets.push_back({a, b, am.lambda});
          metrics.pairs.push_back({a, b, am.lambda.value()});
        }
        const ForwardResult fm = forward(params, mixed);
        Matrix grad_m(fm.logits.rows(), n_l);
        double loss_m = 0.0;
        const double scale_l = 1.0 / static_cast<double>(n_l);
        for (Eigen::Index i = 0; i < n_l; ++i) {
          const MixedTarget& t = targets[static_cast<std::size_t>(i)];
          LossResult r = mce_loss(fm.logits.col(i), t);
          if (config.eta > 0.0 && t.distinct()) {
            const LossResult dm = asymmetric_dm_loss(fm.logits.col(i), t.class_a, t.class_b);
            r.value += config.eta * dm.value;
            r.grad_logits += config.eta * dm.grad_logits;
          }
          loss_m += r.value;
          grad_m.col(i) = r.grad_logits * scale_l;
        }
        accumulate(total.grads, backward(params, fm.cache, grad_m, false).grads, w);
        total.loss += w * loss_m * scale_l;
      }
    }
  }

  sgd_step(params, total.grads, state, step, total_steps, train);
  metrics.loss = total.loss;
  return metrics;
}

SslResult train_ssl(const Dataset& labeled, const Dataset& unlabeled, const Dataset& test, const SSLConfig& config,
                    const TrainConfig& train) {
  if (labeled.empty()) throw std::invalid_argument("train_ssl: empty labeled set");
  validate(config);
  validate(train);
  std::vector<char> present(static_cast<std::size_t>(labeled.num_classes), 0);
  for (int l : labeled.labels) present[static_cast<std::size_t>(l)] = 1;
  if (std::find(present.begin(), present.end(), 0) != present.end()) {
    throw std::invalid_argument("train_ssl: some class has no labeled sample");
  }

  Rng rng(train.seed);
  Rng urng(train.seed ^ kUnlabeledStreamSalt);
  SslResult result;
  result.params = initialize(network_spec(labeled, train), rng);
  SgdState state = make_sgd_state(result.params);

  auto test_acc = [&]() {
    return test.empty() ? std::numeric_limits<double>::quiet_NaN() : top1_accuracy(result.params, test);
  };
  result.log.push_back({0, clean_loss(result.params, labeled), test_acc(), 0.0});
  result.best_test_acc = result.log.back().test_acc;

  const int n = static_cast<int>(labeled.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::size_t cursor = order.size();
  const auto u_batch = static_cast<std::size_t>(std::min<std::size_t>(config.unlabeled_batch, unlabeled.size()));
  std::vector<int> u_order(unlabeled.size());
  std::iota(u_order.begin(), u_order.end(), 0);

  double loss_sum = 0.0;
  std::size_t accepted_sum = 0;
  std::size_t seen_sum = 0;
  int since_eval = 0;
  for (int step = 0; step < config.steps; ++step) {
    if (cursor >= order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::size_t take = std::min(order.size() - cursor, static_cast<std::size_t>(train.batch_size));
    const std::span<const int> idx(order.data() + cursor, take);
    cursor += take;
    std::vector<int> labels;
    for (int i : idx) labels.push_back(labeled.labels[static_cast<std::size_t>(i)]);

    Matrix ux;
    if (u_batch > 0 && config.unlabeled_weight > 0.0) {
      // Partial Fisher-Yates: a fresh uniform subset each step.
      for (std::size_t k = 0; k < u_batch; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, u_order.size() - 1);
        std::swap(u_order[k], u_order[pick(urng)]);
      }
      ux = gather_columns(unlabeled.inputs, std::span<const int>(u_order.data(), u_batch));
    }
    const SslStepMetrics m = ssl_step(result.params, state, gather_columns(labeled.inputs, idx), labels, ux, config,
                                      train, step, config.steps, urng);
    loss_sum += m.loss;
    accepted_sum += m.accepted();
    seen_sum += m.pseudo_labels.size();
    ++since_eval;
    if ((step + 1) % config.eval_interval == 0 || step + 1 == config.steps) {
      SslLogEntry entry;
      entry.step = step + 1;
      entry.train_loss = loss_sum / since_eval;
      entry.test_acc = test_acc();
      entry.accepted_fraction = seen_sum == 0 ? 0.0 : static_cast<double>(accepted_sum) / static_cast<double>(seen_sum);
      result.log.push_back(entry);
      if (entry.test_acc > result.best_test_acc) result.best_test_acc = entry.test_acc;
      loss_sum = 0.0;
      accepted_sum = 0;
      seen_sum = 0;
      since_eval = 0;
    }
  }
  return result;
}

}  // namespace demix
