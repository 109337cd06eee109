#include "nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Core>

namespace bayesft::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstRowVecMap = Eigen::Map<const Eigen::RowVectorXd>;

struct Cache {
  Tensor input;
  Tensor aux;  // conv columns, dropout mask or normalised activations
  std::vector<std::size_t> argmax;
  std::vector<double> inv_std;
  bool masked = false;
};

double gaussian_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gaussian_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? x : kLeakySlope * x;
    case Activation::elu: return x > 0.0 ? x : std::expm1(x);
    case Activation::gelu: return x * gaussian_cdf(x);
  }
  return x;
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? 1.0 : kLeakySlope;
    case Activation::elu: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::gelu: return gaussian_cdf(x) + x * gaussian_pdf(x);
  }
  return 1.0;
}

// Channel layout for batch normalisation: flat inputs normalise per feature,
// (C,H,W) inputs per channel over batch and spatial positions.
struct ChannelLayout {
  std::size_t channels;
  std::size_t spatial;
};

ChannelLayout channel_layout(const Shape& sample) {
  if (sample.size() == 1) return {sample[0], 1};
  return {sample[0], sample[1] * sample[2]};
}

Shape norm_param_shape(NormKind kind, const Shape& sample) {
  if (kind == NormKind::batch) return {channel_layout(sample).channels};
  return sample;
}

void check_alpha(const NetworkSpec& spec, std::span<const double> alpha) {
  const std::size_t slots = dropout_slot_count(spec);
  if (alpha.size() != slots) {
    throw ShapeError("architecture vector has " + std::to_string(alpha.size()) + " rates, network has " +
                     std::to_string(slots) + " dropout slots");
  }
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] >= 0.0 && alpha[i] < 1.0)) {
      throw DomainError("dropout rate " + std::to_string(alpha[i]) + " at slot " + std::to_string(i) +
                        " outside [0, 1)");
    }
  }
}

// One forward/backward sweep through a validated network.
class Pass {
 public:
  Pass(const Network& net, std::span<const double> alpha, Rng* rng, bool record)
      : net_(net), shapes_(validate(net.spec)), alpha_(alpha), rng_(rng), record_(record) {
    check_alpha(net.spec, alpha);
    if (net.train_mode && rng == nullptr &&
        std::any_of(alpha.begin(), alpha.end(), [](double p) { return p > 0.0; })) {
      throw DomainError("train-mode dropout needs a random generator");
    }
    if (record_) caches_.resize(net.spec.layers.size());
  }

  Tensor run(const Tensor& batch, bool check_finite) {
    if (batch.rank() < 1 || batch.dim(0) == 0) throw ShapeError("batch must have a non-empty leading dimension");
    batch_ = batch.dim(0);
    const std::size_t per_sample = element_count(net_.spec.input_shape);
    if (batch.size() != batch_ * per_sample) {
      throw ShapeError("batch " + to_string(batch.shape) + " does not match input shape " +
                       to_string(net_.spec.input_shape));
    }
    Tensor x = batch;
    Shape s{batch_};
    s.insert(s.end(), net_.spec.input_shape.begin(), net_.spec.input_shape.end());
    x.reshape(std::move(s));

    for (std::size_t i = 0; i < net_.spec.layers.size(); ++i) {
      x = forward_layer(i, std::move(x));
      if (check_finite && !x.all_finite()) throw NumericError(i, "forward output");
    }
    return x;
  }

  ParamMap backward(Tensor grad, bool check_finite) {
    ParamMap grads;
    for (std::size_t i = net_.spec.layers.size(); i-- > 0;) {
      grad = backward_layer(i, std::move(grad), grads);
      if (check_finite && !grad.all_finite()) throw NumericError(i, "backward gradient");
    }
    if (check_finite) {
      for (const auto& [name, g] : grads) {
        if (!g.all_finite()) throw NumericError(layer_of(name), "gradient of " + name);
      }
    }
    return grads;
  }

  ParamMap take_batch_stats() { return std::move(batch_stats_); }

 private:
  static std::size_t layer_of(const std::string& name) { return std::stoul(name.substr(5, 2)); }

  const Tensor& param(std::size_t i, const char* what) const { return net_.params.at(param_name(i, what)); }

  Shape with_batch(const Shape& sample) const {
    Shape s{batch_};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
  }

  Tensor forward_layer(std::size_t i, Tensor x) {
    const LayerSpec& layer = net_.spec.layers[i];
    const Shape& in = shapes_[i];
    const Shape& out = shapes_[i + 1];
    Cache* cache = record_ ? &caches_[i] : nullptr;

    if (std::holds_alternative<DenseSpec>(layer)) {
      const std::size_t n_in = in[0], n_out = out[0];
      const Tensor& w = param(i, "weight");
      const Tensor& b = param(i, "bias");
      Tensor y(with_batch(out));
      MatMap ym(y.values.data(), batch_, n_out);
      ym.noalias() = ConstMatMap(x.values.data(), batch_, n_in) * ConstMatMap(w.values.data(), n_out, n_in).transpose();
      ym.rowwise() += ConstRowVecMap(b.values.data(), n_out);
      if (cache) cache->input = std::move(x);
      return y;
    }

    if (const auto* conv = std::get_if<Conv2dSpec>(&layer)) {
      const std::size_t c = in[0], h = in[1], wd = in[2], k = conv->kernel_size;
      const std::size_t oc = out[0], oh = out[1], ow = out[2];
      const std::size_t patch = c * k * k, positions = oh * ow;
      const Tensor& w = param(i, "weight");
      const Tensor& b = param(i, "bias");
      Tensor cols({batch_, patch, positions});
      Tensor y(with_batch(out));
      ConstMatMap wm(w.values.data(), oc, patch);
      for (std::size_t n = 0; n < batch_; ++n) {
        double* col = cols.values.data() + n * patch * positions;
        const double* xs = x.values.data() + n * c * h * wd;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
              double* row = col + ((ch * k + ki) * k + kj) * positions;
              for (std::size_t r = 0; r < oh; ++r) {
                const double* src = xs + (ch * h + r + ki) * wd + kj;
                std::copy(src, src + ow, row + r * ow);
              }
            }
          }
        }
        MatMap yn(y.values.data() + n * oc * positions, oc, positions);
        yn.noalias() = wm * ConstMatMap(col, patch, positions);
        for (std::size_t o = 0; o < oc; ++o) yn.row(o).array() += b[o];
      }
      if (cache) cache->aux = std::move(cols);
      return y;
    }

    if (const auto* pool = std::get_if<MaxPool2dSpec>(&layer)) {
      const std::size_t c = in[0], h = in[1], wd = in[2], win = pool->window;
      const std::size_t oh = out[1], ow = out[2];
      Tensor y(with_batch(out));
      std::vector<std::size_t> arg(y.size());
      for (std::size_t n = 0; n < batch_; ++n) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (n * c + ch) * h * wd;
          for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t q = 0; q < ow; ++q) {
              std::size_t best = base + (r * win) * wd + q * win;
              for (std::size_t a = 0; a < win; ++a) {
                for (std::size_t bb = 0; bb < win; ++bb) {
                  const std::size_t idx = base + (r * win + a) * wd + q * win + bb;
                  if (x[idx] > x[best]) best = idx;
                }
              }
              const std::size_t o = ((n * c + ch) * oh + r) * ow + q;
              y[o] = x[best];
              arg[o] = best;
            }
          }
        }
      }
      if (cache) {
        cache->argmax = std::move(arg);
        cache->input = Tensor(x.shape);  // shape only; values unused in backward
      }
      return y;
    }

    if (const auto* act = std::get_if<ActivationSpec>(&layer)) {
      Tensor y(x.shape);
      for (std::size_t j = 0; j < x.size(); ++j) y[j] = activate(act->kind, x[j]);
      if (cache) cache->input = std::move(x);
      return y;
    }

    if (const auto* norm = std::get_if<NormalizationSpec>(&layer)) {
      return norm->kind == NormKind::batch ? batch_norm_forward(i, in, std::move(x), cache)
                                           : layer_norm_forward(i, std::move(x), cache);
    }

    if (const auto* slot = std::get_if<DropoutSlotSpec>(&layer)) {
      const double p = alpha_[slot->index];
      if (!net_.train_mode || p == 0.0) return x;
      const double keep_scale = 1.0 / (1.0 - p);
      Tensor mask(x.shape);
      for (std::size_t j = 0; j < x.size(); ++j) {
        mask[j] = rng_->uniform() < p ? 0.0 : keep_scale;
        x[j] *= mask[j];
      }
      if (cache) {
        cache->aux = std::move(mask);
        cache->masked = true;
      }
      return x;
    }

    // flatten
    x.reshape(with_batch(out));
    return x;
  }

  Tensor batch_norm_forward(std::size_t i, const Shape& in, Tensor x, Cache* cache) {
    const auto [channels, spatial] = channel_layout(in);
    const Tensor& beta = param(i, "beta");
    const Tensor& gamma = param(i, "gamma");
    std::vector<double> mean(channels), var(channels);
    const double count = static_cast<double>(batch_ * spatial);

    if (net_.train_mode) {
      for (std::size_t n = 0; n < batch_; ++n) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const double* v = x.values.data() + (n * channels + ch) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) mean[ch] += v[s];
        }
      }
      for (auto& m : mean) m /= count;
      for (std::size_t n = 0; n < batch_; ++n) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const double* v = x.values.data() + (n * channels + ch) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) var[ch] += (v[s] - mean[ch]) * (v[s] - mean[ch]);
        }
      }
      for (auto& v : var) v /= count;
      if (record_) {
        batch_stats_[param_name(i, "running_mean")] = Tensor({channels}, mean);
        std::vector<double> unbiased = var;
        if (count > 1.0) {
          for (auto& v : unbiased) v *= count / (count - 1.0);
        }
        batch_stats_[param_name(i, "running_var")] = Tensor({channels}, std::move(unbiased));
      }
    } else {
      mean = net_.buffers.at(param_name(i, "running_mean")).values;
      var = net_.buffers.at(param_name(i, "running_var")).values;
    }

    std::vector<double> inv_std(channels);
    for (std::size_t ch = 0; ch < channels; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + kNormEpsilon);

    Tensor xhat(x.shape);
    for (std::size_t n = 0; n < batch_; ++n) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t off = (n * channels + ch) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          xhat[off + s] = (x[off + s] - mean[ch]) * inv_std[ch];
          x[off + s] = beta[ch] * xhat[off + s] + gamma[ch];
        }
      }
    }
    if (cache) {
      cache->aux = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return x;
  }

  Tensor layer_norm_forward(std::size_t i, Tensor x, Cache* cache) {
    const Tensor& beta = param(i, "beta");
    const Tensor& gamma = param(i, "gamma");
    const std::size_t features = beta.size();
    Tensor xhat(x.shape);
    std::vector<double> inv_std(batch_);
    for (std::size_t n = 0; n < batch_; ++n) {
      double* v = x.values.data() + n * features;
      double mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < features; ++j) mean += v[j];
      mean /= static_cast<double>(features);
      for (std::size_t j = 0; j < features; ++j) var += (v[j] - mean) * (v[j] - mean);
      var /= static_cast<double>(features);
      inv_std[n] = 1.0 / std::sqrt(var + kNormEpsilon);
      for (std::size_t j = 0; j < features; ++j) {
        const double h = (v[j] - mean) * inv_std[n];
        xhat[n * features + j] = h;
        v[j] = beta[j] * h + gamma[j];
      }
    }
    if (cache) {
      cache->aux = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return x;
  }

  Tensor backward_layer(std::size_t i, Tensor dy, ParamMap& grads) {
    const LayerSpec& layer = net_.spec.layers[i];
    const Shape& in = shapes_[i];
    const Shape& out = shapes_[i + 1];
    Cache& cache = caches_[i];

    if (std::holds_alternative<DenseSpec>(layer)) {
      const std::size_t n_in = in[0], n_out = out[0];
      const Tensor& w = param(i, "weight");
      ConstMatMap dym(dy.values.data(), batch_, n_out);
      Tensor dw({n_out, n_in});
      MatMap(dw.values.data(), n_out, n_in).noalias() = dym.transpose() * ConstMatMap(cache.input.values.data(), batch_, n_in);
      Tensor db({n_out});
      for (std::size_t r = 0; r < batch_; ++r) {
        for (std::size_t o = 0; o < n_out; ++o) db[o] += dy.values[r * n_out + o];
      }
      Tensor dx(with_batch(in));
      MatMap(dx.values.data(), batch_, n_in).noalias() = dym * ConstMatMap(w.values.data(), n_out, n_in);
      grads[param_name(i, "weight")] = std::move(dw);
      grads[param_name(i, "bias")] = std::move(db);
      return dx;
    }

    if (const auto* conv = std::get_if<Conv2dSpec>(&layer)) {
      const std::size_t c = in[0], h = in[1], wd = in[2], k = conv->kernel_size;
      const std::size_t oc = out[0], oh = out[1], ow = out[2];
      const std::size_t patch = c * k * k, positions = oh * ow;
      const Tensor& w = param(i, "weight");
      ConstMatMap wm(w.values.data(), oc, patch);
      Tensor dw({oc, c, k, k});
      Tensor db({oc});
      Tensor dx(with_batch(in));
      MatMap dwm(dw.values.data(), oc, patch);
      RowMat dcol(patch, positions);
      for (std::size_t n = 0; n < batch_; ++n) {
        ConstMatMap dyn(dy.values.data() + n * oc * positions, oc, positions);
        ConstMatMap col(cache.aux.values.data() + n * patch * positions, patch, positions);
        dwm.noalias() += dyn * col.transpose();
        for (std::size_t o = 0; o < oc; ++o) {
          const double* row = dyn.data() + o * positions;
          double acc = 0.0;
          for (std::size_t p = 0; p < positions; ++p) acc += row[p];
          db[o] += acc;
        }
        dcol.noalias() = wm.transpose() * dyn;
        double* dxs = dx.values.data() + n * c * h * wd;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
              const double* row = dcol.data() + ((ch * k + ki) * k + kj) * positions;
              for (std::size_t r = 0; r < oh; ++r) {
                double* dst = dxs + (ch * h + r + ki) * wd + kj;
                for (std::size_t q = 0; q < ow; ++q) dst[q] += row[r * ow + q];
              }
            }
          }
        }
      }
      grads[param_name(i, "weight")] = std::move(dw);
      grads[param_name(i, "bias")] = std::move(db);
      return dx;
    }

    if (std::holds_alternative<MaxPool2dSpec>(layer)) {
      Tensor dx(cache.input.shape);
      for (std::size_t o = 0; o < dy.size(); ++o) dx[cache.argmax[o]] += dy[o];
      return dx;
    }

    if (const auto* act = std::get_if<ActivationSpec>(&layer)) {
      for (std::size_t j = 0; j < dy.size(); ++j) dy[j] *= activate_grad(act->kind, cache.input[j]);
      return dy;
    }

    if (const auto* norm = std::get_if<NormalizationSpec>(&layer)) {
      return norm->kind == NormKind::batch ? batch_norm_backward(i, in, std::move(dy), grads)
                                           : layer_norm_backward(i, std::move(dy), grads);
    }

    if (std::holds_alternative<DropoutSlotSpec>(layer)) {
      if (cache.masked) {
        for (std::size_t j = 0; j < dy.size(); ++j) dy[j] *= cache.aux[j];
      }
      return dy;
    }

    dy.reshape(with_batch(in));
    return dy;
  }

  Tensor batch_norm_backward(std::size_t i, const Shape& in, Tensor dy, ParamMap& grads) {
    const auto [channels, spatial] = channel_layout(in);
    const Cache& cache = caches_[i];
    const Tensor& beta = param(i, "beta");
    const Tensor& xhat = cache.aux;
    Tensor dbeta({channels}), dgamma({channels});
    std::vector<double> sum_dxhat(channels), sum_dxhat_xhat(channels);
    for (std::size_t n = 0; n < batch_; ++n) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t off = (n * channels + ch) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          const double g = dy[off + s];
          dbeta[ch] += g * xhat[off + s];
          dgamma[ch] += g;
          sum_dxhat[ch] += g * beta[ch];
          sum_dxhat_xhat[ch] += g * beta[ch] * xhat[off + s];
        }
      }
    }
    const double count = static_cast<double>(batch_ * spatial);
    for (std::size_t n = 0; n < batch_; ++n) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t off = (n * channels + ch) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          const double dxhat = dy[off + s] * beta[ch];
          if (net_.train_mode) {
            dy[off + s] = cache.inv_std[ch] / count *
                          (count * dxhat - sum_dxhat[ch] - xhat[off + s] * sum_dxhat_xhat[ch]);
          } else {
            dy[off + s] = dxhat * cache.inv_std[ch];
          }
        }
      }
    }
    grads[param_name(i, "beta")] = std::move(dbeta);
    grads[param_name(i, "gamma")] = std::move(dgamma);
    return dy;
  }

  Tensor layer_norm_backward(std::size_t i, Tensor dy, ParamMap& grads) {
    const Cache& cache = caches_[i];
    const Tensor& beta = param(i, "beta");
    const std::size_t features = beta.size();
    const Tensor& xhat = cache.aux;
    Tensor dbeta(beta.shape), dgamma(beta.shape);
    const double f = static_cast<double>(features);
    for (std::size_t n = 0; n < batch_; ++n) {
      double sum = 0.0, sum_x = 0.0;
      for (std::size_t j = 0; j < features; ++j) {
        const std::size_t idx = n * features + j;
        dbeta[j] += dy[idx] * xhat[idx];
        dgamma[j] += dy[idx];
        const double dxhat = dy[idx] * beta[j];
        sum += dxhat;
        sum_x += dxhat * xhat[idx];
      }
      for (std::size_t j = 0; j < features; ++j) {
        const std::size_t idx = n * features + j;
        const double dxhat = dy[idx] * beta[j];
        dy[idx] = cache.inv_std[n] / f * (f * dxhat - sum - xhat[idx] * sum_x);
      }
    }
    grads[param_name(i, "beta")] = std::move(dbeta);
    grads[param_name(i, "gamma")] = std::move(dgamma);
    return dy;
  }

  const Network& net_;
  std::vector<Shape> shapes_;
  std::span<const double> alpha_;
  Rng* rng_;
  bool record_;
  std::size_t batch_ = 0;
  std::vector<Cache> caches_;
  ParamMap batch_stats_;
};

}  // namespace

std::string param_name(std::size_t layer, const char* what) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "layer%02zu.%s", layer, what);
  return buf;
}

Network init_xavier(const NetworkSpec& spec, std::uint64_t seed) {
  const auto shapes = validate(spec);
  Network net;
  net.spec = spec;
  Rng rng(seed);

  auto xavier = [&](Shape shape, std::size_t fan_in, std::size_t fan_out) {
    Tensor w(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.values) v = rng.uniform(-bound, bound);
    return w;
  };

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Shape& in = shapes[i];
    const Shape& out = shapes[i + 1];
    const LayerSpec& layer = spec.layers[i];
    if (std::holds_alternative<DenseSpec>(layer)) {
      net.params[param_name(i, "weight")] = xavier({out[0], in[0]}, in[0], out[0]);
      net.params[param_name(i, "bias")] = Tensor({out[0]});
    } else if (const auto* conv = std::get_if<Conv2dSpec>(&layer)) {
      const std::size_t k = conv->kernel_size;
      net.params[param_name(i, "weight")] = xavier({out[0], in[0], k, k}, in[0] * k * k, out[0] * k * k);
      net.params[param_name(i, "bias")] = Tensor({out[0]});
    } else if (const auto* norm = std::get_if<NormalizationSpec>(&layer)) {
      const Shape ps = norm_param_shape(norm->kind, in);
      net.params[param_name(i, "beta")] = Tensor(ps, 1.0);
      net.params[param_name(i, "gamma")] = Tensor(ps, 0.0);
      if (norm->kind == NormKind::batch) {
        net.buffers[param_name(i, "running_mean")] = Tensor(ps, 0.0);
        net.buffers[param_name(i, "running_var")] = Tensor(ps, 1.0);
      }
    }
  }
  return net;
}

Tensor forward(const Network& net, const Tensor& batch, std::span<const double> alpha, Rng* rng) {
  Pass pass(net, alpha, rng, /*record=*/false);
  return pass.run(batch, /*check_finite=*/false);
}

Tensor softmax(const Tensor& logits) {
  Tensor p(logits.shape);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.values.data() + r * c;
    const double m = *std::max_element(z, z + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += (p[r * c + j] = std::exp(z[j] - m));
    for (std::size_t j = 0; j < c; ++j) p[r * c + j] /= sum;
  }
  return p;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw ShapeError("label count does not match batch size");
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.values.data() + r * c;
    const double m = *std::max_element(z, z + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(z[j] - m);
    total += m + std::log(sum) - z[labels[r]];
  }
  return total / static_cast<double>(n);
}

LossAndGrads loss_and_grads(const Network& net, const Tensor& batch, std::span<const int> labels,
                            std::span<const double> alpha, Rng* rng) {
  Pass pass(net, alpha, rng, /*record=*/true);
  Tensor logits = pass.run(batch, /*check_finite=*/true);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw ShapeError("label count does not match batch size");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw DomainError("label " + std::to_string(y) + " out of range");
  }

  LossAndGrads out;
  out.loss = softmax_cross_entropy(logits, labels);
  if (!std::isfinite(out.loss)) throw NumericError(net.spec.layers.size() - 1, "loss");

  Tensor grad = softmax(logits);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    grad[r * c + labels[r]] -= 1.0;
    for (std::size_t j = 0; j < c; ++j) grad[r * c + j] *= inv_n;
  }
  out.grads = pass.backward(std::move(grad), /*check_finite=*/true);
  out.batch_stats = pass.take_batch_stats();
  return out;
}

}  // namespace bayesft::nn
