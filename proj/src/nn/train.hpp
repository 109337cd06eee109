#pragma once

#include <cstdint>
#include <span>

#include "data/dataset.hpp"
#include "nn/network.hpp"

namespace bayesft::nn {

struct SgdConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 128;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
};

void check_sgd(const SgdConfig& cfg);

// Plain mini-batch SGD for cfg.epochs epochs. Shuffling and dropout masks come
// from cfg.seed. Batch-norm running statistics follow an EMA with momentum 0.1.
// Returns the trained network in eval mode; throws DivergenceError if a batch
// loss or gradient becomes non-finite.
Network train(Network net, const data::DatasetSplit& data, std::span<const double> alpha, const SgdConfig& cfg);

struct Evaluation {
  double loss = 0.0;      // mean cross-entropy, may be inf/NaN under heavy drift
  double accuracy = 0.0;  // argmax, ties to the lowest class index
};

// Eval-mode pass over the whole split in fixed-size chunks.
Evaluation evaluate(const Network& net, const data::DatasetSplit& data);

double evaluate_accuracy(const Network& net, const data::DatasetSplit& data);

// Argmax class per row; ties go to the lowest index, NaN rows to class 0.
std::vector<int> predict(const Network& net, const nn::Tensor& inputs);

inline constexpr std::size_t kEvalChunk = 500;

}  // namespace bayesft::nn
