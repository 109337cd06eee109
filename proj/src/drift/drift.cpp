#include "drift/drift.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "common/rng.hpp"
#include "nn/train.hpp"

namespace bayesft::drift {

void check(const DriftConfig& cfg) {
  if (!(cfg.sigma >= 0.0) || !std::isfinite(cfg.sigma)) throw ConfigError("drift sigma must be finite and >= 0");
  if (cfg.samples == 0) throw ConfigError("drift needs at least one Monte-Carlo sample");
}

double drift_normal(std::uint64_t seed, std::uint64_t draw_index, std::string_view param, std::size_t element) {
  std::uint64_t key = splitmix64(seed ^ 0x5bd1e9955bd1e995ULL);
  key = splitmix64(key ^ draw_index);
  key = splitmix64(key ^ fnv1a(param));
  key = splitmix64(key ^ static_cast<std::uint64_t>(element));
  return keyed_normal(key);
}

nn::Network sample_drift(const nn::Network& net, const DriftConfig& cfg, std::uint64_t draw_index) {
  check(cfg);
  nn::Network out = net;
  if (cfg.sigma == 0.0) return out;
  for (auto& [name, t] : out.params) {
    if (cfg.perturb_set == PerturbSet::weights_only && !name.ends_with(".weight")) continue;
    for (std::size_t j = 0; j < t.size(); ++j) {
      t[j] *= std::exp(cfg.sigma * drift_normal(cfg.seed, draw_index, name, j));
    }
  }
  return out;
}

std::vector<DrawResult> evaluate_draws(const nn::Network& net, const data::DatasetSplit& data, const DriftConfig& cfg,
                                       std::uint64_t first_draw) {
  check(cfg);
  data::check_split(data);
  std::vector<DrawResult> results;
  results.reserve(cfg.samples);
  for (std::size_t t = 0; t < cfg.samples; ++t) {
    const nn::Network drifted = sample_drift(net, cfg, first_draw + t);
    const nn::Evaluation e = nn::evaluate(drifted, data);
    DrawResult r{e.loss, e.accuracy, false};
    if (!std::isfinite(r.loss)) {
      r.loss = kLossClamp;
      r.clamped = true;
    }
    results.push_back(r);
  }
  return results;
}

// Welford updates: identical inputs give exactly that value and std 0.
MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  double ss = 0.0;
  std::size_t n = 0;
  for (double x : xs) {
    ++n;
    const double delta = x - m.mean;
    m.mean += delta / static_cast<double>(n);
    ss += delta * (x - m.mean);
  }
  if (n >= 2) m.std = std::sqrt(ss / static_cast<double>(n - 1));
  return m;
}

RobustEstimate mc_robust_objective(const nn::Network& net, const ArchVector& alpha, const data::DatasetSplit& data,
                                   const DriftConfig& cfg, Metric metric, std::uint64_t first_draw) {
  if (alpha.size() != nn::dropout_slot_count(net.spec)) {
    throw ShapeError("architecture vector does not match the network's dropout slots");
  }
  const auto draws = evaluate_draws(net, data, cfg, first_draw);
  RobustEstimate est;
  est.metric = metric;
  for (const auto& d : draws) {
    est.per_sample.push_back(metric == Metric::neg_loss ? -d.loss : d.accuracy);
    est.clamped_samples += d.clamped ? 1 : 0;
  }
  const MeanStd ms = mean_std(est.per_sample);
  est.mean_objective = ms.mean;
  est.std_error = ms.std / std::sqrt(static_cast<double>(draws.size()));
  return est;
}

std::vector<SweepRow> drift_accuracy_sweep(const nn::Network& net, const ArchVector& alpha,
                                           const data::DatasetSplit& data, const std::vector<double>& sigmas,
                                           std::size_t samples, std::uint64_t seed, PerturbSet perturb_set) {
  if (sigmas.empty()) throw ConfigError("sigma grid is empty");
  if (alpha.size() != nn::dropout_slot_count(net.spec)) {
    throw ShapeError("architecture vector does not match the network's dropout slots");
  }
  std::vector<SweepRow> rows;
  for (double sigma : sigmas) {
    const DriftConfig cfg{sigma, samples, seed, perturb_set};
    const auto draws = evaluate_draws(net, data, cfg);
    std::vector<double> acc, loss;
    SweepRow row;
    for (const auto& d : draws) {
      acc.push_back(d.accuracy);
      loss.push_back(d.loss);
      row.clamped_samples += d.clamped ? 1 : 0;
    }
    const MeanStd a = mean_std(acc), l = mean_std(loss);
    row.sigma = sigma;
    row.mean_accuracy = a.mean;
    row.std_accuracy = a.std;
    row.mean_loss = l.mean;
    row.std_loss = l.std;
    row.samples = samples;
    row.seed = seed;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepCsvHeader << '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%.17g,%.17g,%.17g,%.17g,%zu,%llu,%zu\n", r.sigma, r.mean_accuracy,
                  r.std_accuracy, r.mean_loss, r.std_loss, r.samples, static_cast<unsigned long long>(r.seed),
                  r.clamped_samples);
    out << buf;
  }
}

}  // namespace bayesft::drift
