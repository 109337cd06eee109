#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common/arch_vector.hpp"
#include "common/rng.hpp"
#include "nn/network_spec.hpp"
#include "nn/tensor.hpp"

namespace bayesft::nn {

using ParamMap = std::map<std::string, Tensor>;

// Trainable parameters are keyed "layerNN.weight", "layerNN.bias",
// "layerNN.beta", "layerNN.gamma". Batch-norm running statistics are not
// trainable and live in `buffers` ("layerNN.running_mean"/"running_var").
struct Network {
  NetworkSpec spec;
  ParamMap params;
  ParamMap buffers;
  bool train_mode = false;
};

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kLeakySlope = 0.01;

std::string param_name(std::size_t layer, const char* what);

// Xavier-uniform weights, zero biases, beta = 1, gamma = 0, running stats (0, 1).
Network init_xavier(const NetworkSpec& spec, std::uint64_t seed);

// Logits for a batch whose leading dimension is the batch size. The remaining
// dimensions must hold product(input_shape) elements; they are reinterpreted
// as input_shape. `rng` is consulted only by train-mode dropout.
Tensor forward(const Network& net, const Tensor& batch, std::span<const double> alpha, Rng* rng = nullptr);

struct LossAndGrads {
  double loss = 0.0;
  ParamMap grads;
  // Train-mode batch statistics per batch-norm layer (mean, unbiased variance),
  // keyed by the running-stat buffer names. Empty in eval mode.
  ParamMap batch_stats;
};

// Mean softmax cross-entropy and its gradient with respect to every parameter.
// Throws NumericError carrying the first layer whose output is non-finite.
LossAndGrads loss_and_grads(const Network& net, const Tensor& batch, std::span<const int> labels,
                            std::span<const double> alpha, Rng* rng = nullptr);

// Loss only; returns +inf/NaN rather than throwing when the forward pass blows up.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise softmax probabilities.
Tensor softmax(const Tensor& logits);

}  // namespace bayesft::nn
