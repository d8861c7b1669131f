#include "demix/network.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace demix {

namespace {

constexpr int kKernel = 3;
constexpr int kTaps = kKernel * kKernel;

void check_conv_geometry(const ImageShape& in) {
  if (in.height % 2 != 0 || in.width % 2 != 0) {
    throw std::invalid_argument("conv layer needs even spatial dims for 2x2 pooling");
  }
}

// im2col for a batch: row = c * 9 + ky * 3 + kx, column = b * HW + y * W + x.
Matrix im2col(const Matrix& inputs, const ImageShape& in) {
  const int hw = in.pixels();
  const Eigen::Index batch = inputs.cols();
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(in.channels) * kTaps, batch * hw);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int c = 0; c < in.channels; ++c) {
      for (int ky = 0; ky < kKernel; ++ky) {
        for (int kx = 0; kx < kKernel; ++kx) {
          const Eigen::Index row = c * kTaps + ky * kKernel + kx;
          for (int y = 0; y < in.height; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= in.height) continue;
            for (int x = 0; x < in.width; ++x) {
              const int sx = x + kx - 1;
              if (sx < 0 || sx >= in.width) continue;
              cols(row, b * hw + y * in.width + x) = inputs((c * in.height + sy) * in.width + sx, b);
            }
          }
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, const ImageShape& in, Eigen::Index batch) {
  const int hw = in.pixels();
  Matrix out = Matrix::Zero(in.size(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int c = 0; c < in.channels; ++c) {
      for (int ky = 0; ky < kKernel; ++ky) {
        for (int kx = 0; kx < kKernel; ++kx) {
          const Eigen::Index row = c * kTaps + ky * kKernel + kx;
          for (int y = 0; y < in.height; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= in.height) continue;
            for (int x = 0; x < in.width; ++x) {
              const int sx = x + kx - 1;
              if (sx < 0 || sx >= in.width) continue;
              out((c * in.height + sy) * in.width + sx, b) += cols(row, b * hw + y * in.width + x);
            }
          }
        }
      }
    }
  }
  return out;
}

Matrix activate(const Matrix& pre, Activation act) {
  if (act == Activation::relu) return pre.cwiseMax(0.0);
  return pre;
}

Matrix dense_forward(const Layer& layer, const Matrix& inputs, LayerCache& cache) {
  cache.input = inputs;
  cache.pre.noalias() = layer.weight * inputs;
  cache.pre.colwise() += layer.bias;
  return activate(cache.pre, layer.activation);
}

Matrix conv_forward(const Layer& layer, const Matrix& inputs, LayerCache& cache) {
  const ImageShape& in = layer.input;
  const Eigen::Index batch = inputs.cols();
  const int hw = in.pixels();
  const int out_ch = static_cast<int>(layer.weight.rows());
  const int ph = in.height / 2;
  const int pw = in.width / 2;
  const int pooled = ph * pw;

  cache.input = im2col(inputs, in);
  cache.pre.noalias() = layer.weight * cache.input;
  cache.pre.colwise() += layer.bias;
  const Matrix act = activate(cache.pre, layer.activation);

  Matrix out(static_cast<Eigen::Index>(out_ch) * pooled, batch);
  cache.pool_argmax.assign(static_cast<std::size_t>(out.size()), 0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int c = 0; c < out_ch; ++c) {
      for (int qy = 0; qy < ph; ++qy) {
        for (int qx = 0; qx < pw; ++qx) {
          int best = (2 * qy) * in.width + 2 * qx;
          double best_value = act(c, b * hw + best);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int p = (2 * qy + dy) * in.width + 2 * qx + dx;
              const double v = act(c, b * hw + p);
              if (v > best_value) {
                best_value = v;
                best = p;
              }
            }
          }
          const Eigen::Index row = c * pooled + qy * pw + qx;
          out(row, b) = best_value;
          cache.pool_argmax[static_cast<std::size_t>(b * out.rows() + row)] = best;
        }
      }
    }
  }
  return out;
}

Matrix mix_columns(const Matrix& h, const HiddenMixSpec& spec) {
  if (spec.pairing.size() != static_cast<std::size_t>(h.cols()) || !is_permutation(spec.pairing)) {
    throw std::invalid_argument("hidden mix pairing is not a permutation of the batch");
  }
  Matrix mixed(h.rows(), h.cols());
  for (Eigen::Index i = 0; i < h.cols(); ++i) {
    mixed.col(i) = mix_linear(h.col(i), h.col(spec.pairing[static_cast<std::size_t>(i)]), spec.lambda);
  }
  return mixed;
}

Matrix unmix_gradient(const Matrix& grad, const HiddenMixSpec& spec) {
  const auto [w_a, w_b] = mix_weights(spec.lambda);
  Matrix out = w_a * grad;
  for (Eigen::Index i = 0; i < grad.cols(); ++i) {
    out.col(spec.pairing[static_cast<std::size_t>(i)]) += w_b * grad.col(i);
  }
  return out;
}

ForwardResult run_forward(const Parameters& params, const Matrix& inputs, const std::optional<HiddenMixSpec>& mix) {
  if (params.layers.empty()) throw std::invalid_argument("forward: empty network");
  if (inputs.rows() != params.input_size()) {
    throw std::invalid_argument("forward: input dim " + std::to_string(inputs.rows()) + " does not match layer 0 (" +
                                std::to_string(params.input_size()) + ")");
  }
  if (mix && (mix->layer_index < 0 || mix->layer_index >= static_cast<int>(params.layers.size()))) {
    throw std::out_of_range("hidden mix layer index outside network depth");
  }
  ForwardResult out;
  out.cache.layers.resize(params.layers.size());
  out.cache.batch = inputs.cols();
  out.cache.mix = mix;
  Matrix h = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (mix && static_cast<std::size_t>(mix->layer_index) == l) h = mix_columns(h, *mix);
    const Layer& layer = params.layers[l];
    h = layer.kind == LayerKind::dense ? dense_forward(layer, h, out.cache.layers[l])
                                       : conv_forward(layer, h, out.cache.layers[l]);
  }
  out.logits = std::move(h);
  return out;
}

}  // namespace

ImageShape Layer::output_shape() const {
  if (kind == LayerKind::dense) return {static_cast<int>(weight.rows()), 1, 1};
  return {static_cast<int>(weight.rows()), input.height / 2, input.width / 2};
}

std::size_t Parameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Layer dense_layer(int inputs, int outputs, Activation activation) {
  if (inputs < 1 || outputs < 1) throw std::invalid_argument("dense layer needs positive sizes");
  return {LayerKind::dense, activation, {inputs, 1, 1}, Matrix::Zero(outputs, inputs), Vector::Zero(outputs)};
}

Layer conv_layer(const ImageShape& input, int out_channels) {
  check_conv_geometry(input);
  if (out_channels < 1) throw std::invalid_argument("conv layer needs positive channels");
  return {LayerKind::conv, Activation::relu, input, Matrix::Zero(out_channels, input.channels * kTaps),
          Vector::Zero(out_channels)};
}

void validate(const Parameters& params) {
  if (params.layers.empty()) throw std::invalid_argument("network has no layers");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    if (layer.kind == LayerKind::dense) {
      if (layer.input.channels * layer.input.pixels() != layer.weight.cols()) {
        throw std::invalid_argument("dense layer input does not match weight columns");
      }
    } else {
      check_conv_geometry(layer.input);
      if (layer.weight.cols() != layer.input.channels * kTaps) {
        throw std::invalid_argument("conv layer weight does not match input channels");
      }
    }
    if (layer.bias.size() != layer.weight.rows()) throw std::invalid_argument("bias length mismatch");
    if (l + 1 < params.layers.size() && layer.output_size() != params.layers[l + 1].input_size()) {
      throw std::invalid_argument("layer " + std::to_string(l) + " output does not chain into layer " +
                                  std::to_string(l + 1));
    }
  }
  if (params.num_classes() < 2) throw std::invalid_argument("final layer must produce at least two classes");
}

Parameters zeros_like(const Parameters& params) {
  Parameters out = params;
  for (auto& l : out.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return out;
}

std::vector<double> flatten(const Parameters& params) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  for (const auto& l : params.layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void assign_flat(Parameters& params, std::span<const double> values) {
  if (values.size() != params.parameter_count()) throw std::invalid_argument("flat parameter size mismatch");
  std::size_t offset = 0;
  for (auto& l : params.layers) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), l.weight.size(), l.weight.data());
    offset += static_cast<std::size_t>(l.weight.size());
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), l.bias.size(), l.bias.data());
    offset += static_cast<std::size_t>(l.bias.size());
  }
}

Parameters initialize(const NetworkSpec& spec, Rng& rng) {
  Parameters params;
  if (spec.architecture == Architecture::mlp) {
    params.layers.push_back(dense_layer(spec.input.size(), spec.hidden, Activation::relu));
    params.layers.push_back(dense_layer(spec.hidden, spec.classes, Activation::identity));
  } else {
    params.layers.push_back(conv_layer(spec.input, 8));
    params.layers.push_back(conv_layer(params.layers[0].output_shape(), 16));
    params.layers.push_back(dense_layer(params.layers[1].output_size(), spec.classes, Activation::identity));
  }
  validate(params);
  for (auto& l : params.layers) {
    const double fan_in = l.kind == LayerKind::dense ? static_cast<double>(l.weight.cols())
                                                     : static_cast<double>(l.input.channels * kTaps);
    const double gain = l.activation == Activation::relu ? 6.0 : 3.0;
    std::uniform_real_distribution<double> dist(-std::sqrt(gain / fan_in), std::sqrt(gain / fan_in));
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = dist(rng);
  }
  return params;
}

ForwardResult forward(const Parameters& params, const Matrix& inputs) {
  return run_forward(params, inputs, std::nullopt);
}

ForwardResult forward_manifold_mix(const Parameters& params, const Matrix& inputs, const HiddenMixSpec& spec) {
  return run_forward(params, inputs, spec);
}

Matrix predict(const Parameters& params, const Matrix& inputs) { return forward(params, inputs).logits; }

BackwardResult backward(const Parameters& params, const ActivationCache& cache, const Matrix& grad_logits,
                        bool want_input_grad) {
  if (cache.layers.size() != params.layers.size()) throw std::invalid_argument("backward: cache from another network");
  if (grad_logits.cols() != cache.batch || grad_logits.rows() != params.num_classes()) {
    throw std::invalid_argument("backward: gradient does not match cached batch");
  }
  BackwardResult out;
  out.grads = zeros_like(params);
  Matrix grad = grad_logits;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const Layer& layer = params.layers[li];
    const LayerCache& lc = cache.layers[li];
    Layer& g = out.grads.layers[li];
    const bool need_input = li > 0 || want_input_grad;
    if (lc.pre.cols() == 0 || lc.pre.rows() != layer.weight.rows()) {
      throw std::invalid_argument("backward: stale activation cache");
    }

    if (layer.kind == LayerKind::dense) {
      if (lc.pre.cols() != grad.cols()) throw std::invalid_argument("backward: stale activation cache");
      Matrix d_pre = layer.activation == Activation::relu
                         ? Matrix(grad.array() * (lc.pre.array() > 0.0).cast<double>())
                         : grad;
      g.weight.noalias() = d_pre * lc.input.transpose();
      g.bias = d_pre.rowwise().sum();
      if (need_input) grad.noalias() = layer.weight.transpose() * d_pre;
    } else {
      const ImageShape& in = layer.input;
      const int hw = in.pixels();
      const Eigen::Index batch = grad.cols();
      if (lc.pre.cols() != batch * hw) throw std::invalid_argument("backward: stale activation cache");
      const Eigen::Index pooled_rows = grad.rows();
      const int out_ch = static_cast<int>(layer.weight.rows());
      const int pooled = static_cast<int>(pooled_rows / out_ch);
      Matrix d_act = Matrix::Zero(out_ch, batch * hw);
      for (Eigen::Index b = 0; b < batch; ++b) {
        for (int c = 0; c < out_ch; ++c) {
          for (int q = 0; q < pooled; ++q) {
            const Eigen::Index row = c * pooled + q;
            const int p = lc.pool_argmax[static_cast<std::size_t>(b * pooled_rows + row)];
            d_act(c, b * hw + p) += grad(row, b);
          }
        }
      }
      const Matrix d_pre = d_act.array() * (lc.pre.array() > 0.0).cast<double>();
      g.weight.noalias() = d_pre * lc.input.transpose();
      g.bias = d_pre.rowwise().sum();
      if (need_input) {
        const Matrix d_cols = layer.weight.transpose() * d_pre;
        grad = col2im(d_cols, in, batch);
      }
    }

    if (need_input && cache.mix && static_cast<std::size_t>(cache.mix->layer_index) == li) {
      grad = unmix_gradient(grad, *cache.mix);
    }
  }
  if (want_input_grad) out.input_grad = std::move(grad);
  return out;
}

void validate(const TrainConfig& config) {
  if (!(config.base_lr > 0.0) || !(config.min_lr >= 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (config.min_lr > config.base_lr) throw std::invalid_argument("min_lr must not exceed base_lr");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (config.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be nonnegative");
  if (config.epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (config.hidden < 1) throw std::invalid_argument("hidden must be positive");
}

double cosine_lr(const TrainConfig& config, long step, long total_steps) {
  if (step < 0 || step > total_steps) throw std::out_of_range("step outside schedule horizon");
  if (total_steps == 0) return config.base_lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return config.min_lr + 0.5 * (config.base_lr - config.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

SgdState make_sgd_state(const Parameters& params) { return {zeros_like(params)}; }

void sgd_step(Parameters& params, const Parameters& grads, SgdState& state, long step, long total_steps,
              const TrainConfig& config) {
  const double lr = cosine_lr(config, step, total_steps);
  if (grads.layers.size() != params.layers.size() || state.velocity.layers.size() != params.layers.size()) {
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Layer& p = params.layers[l];
    Layer& v = state.velocity.layers[l];
    const Layer& g = grads.layers[l];
    v.weight = config.momentum * v.weight + g.weight;
    v.bias = config.momentum * v.bias + g.bias;
    p.weight -= lr * (v.weight + config.weight_decay * p.weight);
    p.bias -= lr * v.bias;
  }
}

void accumulate(Parameters& dst, const Parameters& src, double scale) {
  if (dst.layers.size() != src.layers.size()) throw std::invalid_argument("accumulate: shape mismatch");
  for (std::size_t l = 0; l < dst.layers.size(); ++l) {
    dst.layers[l].weight += scale * src.layers[l].weight;
    dst.layers[l].bias += scale * src.layers[l].bias;
  }
}

}  // namespace demix
