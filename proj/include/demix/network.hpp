#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "demix/mixers.hpp"
#include "demix/types.hpp"

namespace demix {

enum class LayerKind : std::uint32_t { dense = 0, conv = 1 };
enum class Activation : std::uint32_t { identity = 0, relu = 1 };
enum class Architecture { mlp, conv };

/// A dense layer, or a 3x3 same-padded convolution followed by ReLU and 2x2 max pooling.
struct Layer {
  LayerKind kind = LayerKind::dense;
  Activation activation = Activation::relu;
  ImageShape input;  // dense: {features, 1, 1}
  Matrix weight;     // dense: out x in; conv: out_channels x (in_channels * 9)
  Vector bias;

  int input_size() const { return input.size(); }
  int output_size() const { return output_shape().size(); }
  ImageShape output_shape() const;
};

struct Parameters {
  std::vector<Layer> layers;

  int input_size() const { return layers.front().input_size(); }
  int num_classes() const { return layers.back().output_size(); }
  std::size_t parameter_count() const;
};

Layer dense_layer(int inputs, int outputs, Activation activation);
Layer conv_layer(const ImageShape& input, int out_channels);

/// Throws if consecutive layer sizes do not chain or tensors are mis-sized.
void validate(const Parameters& params);

Parameters zeros_like(const Parameters& params);
std::vector<double> flatten(const Parameters& params);
void assign_flat(Parameters& params, std::span<const double> values);

struct NetworkSpec {
  Architecture architecture = Architecture::mlp;
  ImageShape input;
  int hidden = 256;
  int classes = 10;
};

/// MLP: in-hidden-C with ReLU. Conv: 3x3(8)-pool-3x3(16)-pool-dense.
/// He-uniform weights for ReLU layers, LeCun-uniform for the output layer, zero biases.
Parameters initialize(const NetworkSpec& spec, Rng& rng);

/// Mix site for hidden-layer mixing: the input of layer `layer_index` (0 = raw inputs).
struct HiddenMixSpec {
  int layer_index = 0;
  Lambda lambda;
  std::vector<int> pairing;
};

struct LayerCache {
  Matrix input;  // dense: layer input; conv: im2col columns
  Matrix pre;    // pre-activation
  std::vector<int> pool_argmax;
};

struct ActivationCache {
  std::vector<LayerCache> layers;
  Eigen::Index batch = 0;
  std::optional<HiddenMixSpec> mix;
};

struct ForwardResult {
  Matrix logits;
  ActivationCache cache;
};

struct BackwardResult {
  Parameters grads;
  Matrix input_grad;  // empty when not requested
};

ForwardResult forward(const Parameters& params, const Matrix& inputs);
ForwardResult forward_manifold_mix(const Parameters& params, const Matrix& inputs, const HiddenMixSpec& spec);
Matrix predict(const Parameters& params, const Matrix& inputs);

BackwardResult backward(const Parameters& params, const ActivationCache& cache, const Matrix& grad_logits,
                        bool want_input_grad = true);

struct TrainConfig {
  double base_lr = 0.1;
  double min_lr = 0.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 50;
  int batch_size = 64;
  std::uint64_t seed = 1;
  Architecture architecture = Architecture::mlp;
  int hidden = 256;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& config);

double cosine_lr(const TrainConfig& config, long step, long total_steps);

struct SgdState {
  Parameters velocity;
};

SgdState make_sgd_state(const Parameters& params);

/// Momentum SGD with decoupled weight decay on weights (biases are not decayed).
void sgd_step(Parameters& params, const Parameters& grads, SgdState& state, long step, long total_steps,
              const TrainConfig& config);

/// dst += scale * src, tensor by tensor.
void accumulate(Parameters& dst, const Parameters& src, double scale = 1.0);

}  // namespace demix
