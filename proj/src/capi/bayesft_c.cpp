#include "bayesft/bayesft.h"

#include <cstring>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "common/error.hpp"
#include "data/dataset.hpp"
#include "drift/drift.hpp"
#include "gp/gp.hpp"
#include "harness/config.hpp"
#include "harness/experiments.hpp"
#include "nn/network.hpp"
#include "nn/serialize.hpp"
#include "nn/train.hpp"

using namespace bayesft;

struct bft_dataset {
  data::DatasetSplit split;
};

struct bft_network {
  nn::Network net;
};

struct bft_gp {
  gp::GpPosterior posterior;
  std::size_t dim;
};

namespace {

thread_local std::string last_error;

bft_status fail(bft_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

template <class F>
bft_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return BFT_OK;
  } catch (const ConfigError& e) {
    return fail(BFT_ERR_CONFIG, e.what());
  } catch (const SpecError& e) {
    return fail(BFT_ERR_SPEC, e.what());
  } catch (const ShapeError& e) {
    return fail(BFT_ERR_SHAPE, e.what());
  } catch (const DomainError& e) {
    return fail(BFT_ERR_DOMAIN, e.what());
  } catch (const DivergenceError& e) {
    return fail(BFT_ERR_DIVERGENCE, e.what());
  } catch (const NumericError& e) {
    return fail(BFT_ERR_NUMERIC, e.what());
  } catch (const LinalgError& e) {
    return fail(BFT_ERR_LINALG, e.what());
  } catch (const FormatError& e) {
    return fail(BFT_ERR_FORMAT, e.what());
  } catch (const IoError& e) {
    return fail(BFT_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(BFT_ERR_GENERIC, e.what());
  } catch (...) {
    return fail(BFT_ERR_GENERIC, "unknown error");
  }
}

harness::ExperimentConfig parse(const char* command, const char* config_json, const uint64_t* seed_override) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  auto cfg = harness::parse_config(doc, command);
  if (seed_override) cfg.seed = *seed_override;
  return cfg;
}

}  // namespace

extern "C" {

const char* bft_last_error(void) { return last_error.c_str(); }

const char* bft_status_name(bft_status status) {
  switch (status) {
    case BFT_OK: return "ok";
    case BFT_ERR_GENERIC: return "error";
    case BFT_ERR_CONFIG: return "config";
    case BFT_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case BFT_ERR_SPEC: return "spec";
    case BFT_ERR_SHAPE: return "shape";
    case BFT_ERR_DOMAIN: return "domain";
    case BFT_ERR_NUMERIC: return "numeric";
    case BFT_ERR_DIVERGENCE: return "divergence";
    case BFT_ERR_LINALG: return "linalg";
    case BFT_ERR_IO: return "io";
    case BFT_ERR_FORMAT: return "format";
  }
  return "unknown";
}

const char* bft_version(void) { return "0.1.0"; }

bft_status bft_run_experiment(const char* command, const char* config_json, const char* out_dir,
                              const uint64_t* seed_override, int verbose) {
  if (!command || !config_json || !out_dir) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const auto cfg = parse(command, config_json, seed_override);
    harness::RunContext ctx{out_dir, verbose ? &std::cerr : nullptr};
    harness::run_experiment(cfg, ctx);
  });
}

bft_status bft_validate_config(const char* command, const char* config_json, const uint64_t* seed_override,
                               char* hash_out) {
  if (!command || !config_json) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const auto cfg = parse(command, config_json, seed_override);
    if (hash_out) std::memcpy(hash_out, harness::config_hash(cfg).c_str(), 17);
  });
}

bft_status bft_dataset_load_mnist(const char* images_path, const char* labels_path, bft_dataset** out) {
  if (!images_path || !labels_path || !out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { *out = new bft_dataset{data::load_mnist_idx(images_path, labels_path)}; });
}

bft_status bft_dataset_two_moons(size_t n_samples, double noise_std, uint64_t seed, bft_dataset** out) {
  if (!out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    data::SyntheticSpec spec;
    spec.n_samples = n_samples;
    spec.noise_std = noise_std;
    spec.seed = seed;
    *out = new bft_dataset{data::make_synthetic(spec)};
  });
}

bft_status bft_dataset_from_arrays(const double* inputs, const int* labels, size_t rows, size_t features,
                                   size_t num_classes, bft_dataset** out) {
  if (!inputs || !labels || !out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    data::DatasetSplit d;
    d.inputs = nn::Tensor({rows, features});
    std::copy(inputs, inputs + rows * features, d.inputs.values.begin());
    d.labels.assign(labels, labels + rows);
    d.num_classes = num_classes;
    d.name = "arrays";
    data::check_split(d);
    *out = new bft_dataset{std::move(d)};
  });
}

size_t bft_dataset_size(const bft_dataset* d) { return d ? d->split.size() : 0; }
size_t bft_dataset_sample_size(const bft_dataset* d) { return d ? d->split.sample_size() : 0; }
void bft_dataset_free(bft_dataset* d) { delete d; }

bft_status bft_network_create(const char* spec_json, uint64_t seed, bft_network** out) {
  if (!spec_json || !out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(spec_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw SpecError(0, std::string("spec is not valid JSON: ") + e.what());
    }
    *out = new bft_network{nn::init_xavier(nn::spec_from_json(j), seed)};
  });
}

size_t bft_network_dropout_slots(const bft_network* net) {
  return net ? nn::dropout_slot_count(net->net.spec) : 0;
}

bft_status bft_network_train(bft_network* net, const bft_dataset* data, const double* alpha, size_t alpha_len,
                             double learning_rate, size_t batch_size, size_t epochs, uint64_t seed) {
  if (!net || !data || (alpha_len > 0 && !alpha)) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const nn::SgdConfig cfg{learning_rate, batch_size, epochs, seed};
    net->net = nn::train(net->net, data->split, std::span<const double>(alpha, alpha_len), cfg);
  });
}

bft_status bft_network_accuracy(const bft_network* net, const bft_dataset* data, double* accuracy_out) {
  if (!net || !data || !accuracy_out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { *accuracy_out = nn::evaluate_accuracy(net->net, data->split); });
}

bft_status bft_network_predict(const bft_network* net, const double* inputs, size_t rows, int* labels_out) {
  if (!net || !inputs || !labels_out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    nn::Shape shape{rows};
    shape.insert(shape.end(), net->net.spec.input_shape.begin(), net->net.spec.input_shape.end());
    nn::Tensor x(shape);
    std::copy(inputs, inputs + x.size(), x.values.begin());
    const auto pred = nn::predict(net->net, x);
    std::copy(pred.begin(), pred.end(), labels_out);
  });
}

bft_status bft_network_save(const bft_network* net, const char* path) {
  if (!net || !path) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { nn::save_parameters(path, net->net); });
}

bft_status bft_network_load(bft_network* net, const char* path) {
  if (!net || !path) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { net->net = nn::load_parameters(path, net->net.spec); });
}

void bft_network_free(bft_network* net) { delete net; }

bft_status bft_drift_sample(const bft_network* net, double sigma, uint64_t seed, uint64_t draw, bft_network** out) {
  if (!net || !out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const drift::DriftConfig cfg{sigma, 1, seed, drift::PerturbSet::all_trainable};
    drift::check(cfg);
    *out = new bft_network{drift::sample_drift(net->net, cfg, draw)};
  });
}

bft_status bft_robust_objective(const bft_network* net, const bft_dataset* data, double sigma, size_t samples,
                                uint64_t seed, double* mean_out, double* std_error_out) {
  if (!net || !data || !mean_out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const drift::DriftConfig cfg{sigma, samples, seed, drift::PerturbSet::all_trainable};
    const auto alpha = ArchVector::zeros(nn::dropout_slot_count(net->net.spec));
    const auto est = drift::mc_robust_objective(net->net, alpha, data->split, cfg);
    *mean_out = est.mean_objective;
    if (std_error_out) *std_error_out = est.std_error;
  });
}

bft_status bft_gp_fit(const double* alphas, const double* values, size_t n, size_t dim, double k0, const double* k,
                      double jitter, bft_gp** out) {
  if (!alphas || !values || !k || !out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    gp::TrialHistory h;
    for (size_t i = 0; i < n; ++i) {
      h.add(ArchVector(std::vector<double>(alphas + i * dim, alphas + (i + 1) * dim)), values[i]);
    }
    gp::KernelParams p;
    p.k0 = k0;
    p.k.assign(k, k + dim);
    p.jitter = jitter;
    *out = new bft_gp{gp::GpPosterior(h, p), dim};
  });
}

bft_status bft_gp_predict(const bft_gp* g, const double* query, double* mean_out, double* variance_out) {
  if (!g || !query || !mean_out || !variance_out) return fail(BFT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const auto p = g->posterior.predict(ArchVector(std::vector<double>(query, query + g->dim)));
    *mean_out = p.mean;
    *variance_out = p.variance;
  });
}

void bft_gp_free(bft_gp* g) { delete g; }

}  // extern "C"
