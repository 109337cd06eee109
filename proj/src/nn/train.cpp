#include "nn/train.hpp"

#include <algorithm>
#include <cmath>

namespace bayesft::nn {

namespace {

int argmax_row(const double* z, std::size_t c) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (z[j] > z[best]) best = j;
  }
  return static_cast<int>(best);
}

Tensor gather_rows(const Tensor& inputs, std::size_t per, const std::vector<std::size_t>& order, std::size_t lo,
                   std::size_t hi) {
  Shape shape = inputs.shape;
  shape[0] = hi - lo;
  Tensor out(shape);
  for (std::size_t r = lo; r < hi; ++r) {
    std::copy_n(inputs.values.begin() + static_cast<std::ptrdiff_t>(order[r] * per), per,
                out.values.begin() + static_cast<std::ptrdiff_t>((r - lo) * per));
  }
  return out;
}

Tensor slice_rows(const Tensor& inputs, std::size_t per, std::size_t lo, std::size_t hi) {
  Shape shape = inputs.shape;
  shape[0] = hi - lo;
  return Tensor(shape, std::vector<double>(inputs.values.begin() + static_cast<std::ptrdiff_t>(lo * per),
                                           inputs.values.begin() + static_cast<std::ptrdiff_t>(hi * per)));
}

}  // namespace

void check_sgd(const SgdConfig& cfg) {
  // lr = 0 is accepted: it is the zero-step limit used to check that training
  // leaves parameters untouched.
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ConfigError("learning_rate must be a finite non-negative number");
  }
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (cfg.epochs == 0) throw ConfigError("epochs must be at least 1");
}

Network train(Network net, const data::DatasetSplit& data, std::span<const double> alpha, const SgdConfig& cfg) {
  check_sgd(cfg);
  data::check_split(data);
  net.train_mode = true;
  Rng rng(cfg.seed);
  const std::size_t n = data.size();
  const std::size_t per = data.sample_size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::size_t batch_index = 0;
    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size, ++batch_index) {
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      const Tensor x = gather_rows(data.inputs, per, order, lo, hi);
      std::vector<int> y(hi - lo);
      for (std::size_t r = lo; r < hi; ++r) y[r - lo] = data.labels[order[r]];

      LossAndGrads lg;
      try {
        lg = loss_and_grads(net, x, y, alpha, &rng);
      } catch (const NumericError&) {
        throw DivergenceError(epoch, batch_index);
      }
      for (auto& [name, p] : net.params) {
        const Tensor& g = lg.grads.at(name);
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg.learning_rate * g[j];
      }
      for (auto& [name, stat] : lg.batch_stats) {
        Tensor& running = net.buffers.at(name);
        for (std::size_t j = 0; j < stat.size(); ++j) {
          running[j] = (1.0 - kBatchNormMomentum) * running[j] + kBatchNormMomentum * stat[j];
        }
      }
    }
  }
  net.train_mode = false;
  return net;
}

std::vector<int> predict(const Network& net, const Tensor& inputs) {
  Network eval = net;
  eval.train_mode = false;
  const std::size_t n = inputs.dim(0);
  const std::size_t per = inputs.size() / n;
  const auto alpha = std::vector<double>(dropout_slot_count(net.spec), 0.0);
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t lo = 0; lo < n; lo += kEvalChunk) {
    const std::size_t hi = std::min(n, lo + kEvalChunk);
    const Tensor logits = forward(eval, slice_rows(inputs, per, lo, hi), alpha);
    const std::size_t c = logits.dim(1);
    for (std::size_t r = 0; r < hi - lo; ++r) out.push_back(argmax_row(logits.values.data() + r * c, c));
  }
  return out;
}

Evaluation evaluate(const Network& net, const data::DatasetSplit& data) {
  data::check_split(data);
  const Network* eval = &net;
  Network copy;
  if (net.train_mode) {
    copy = net;
    copy.train_mode = false;
    eval = &copy;
  }
  const std::size_t n = data.size();
  const std::size_t per = data.sample_size();
  const auto alpha = std::vector<double>(dropout_slot_count(net.spec), 0.0);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < n; lo += kEvalChunk) {
    const std::size_t hi = std::min(n, lo + kEvalChunk);
    const Tensor logits = forward(*eval, slice_rows(data.inputs, per, lo, hi), alpha);
    const std::size_t c = logits.dim(1);
    const std::span<const int> labels(data.labels.data() + lo, hi - lo);
    loss_sum += softmax_cross_entropy(logits, labels) * static_cast<double>(hi - lo);
    for (std::size_t r = 0; r < hi - lo; ++r) {
      correct += argmax_row(logits.values.data() + r * c, c) == labels[r] ? 1 : 0;
    }
  }
  return {loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

double evaluate_accuracy(const Network& net, const data::DatasetSplit& data) { return evaluate(net, data).accuracy; }

}  // namespace bayesft::nn
