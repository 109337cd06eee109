#include "gp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "common/error.hpp"

namespace bayesft::gp {

namespace {

// Solves L x = b in place (forward substitution).
void solve_lower(const Matrix& l, std::vector<double>& b) {
  for (std::size_t i = 0; i < l.rows; ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < i; ++j) s -= l(i, j) * b[j];
    b[i] = s / l(i, i);
  }
}

// Solves L^T x = b in place (back substitution).
void solve_upper_transposed(const Matrix& l, std::vector<double>& b) {
  for (std::size_t i = l.rows; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < l.rows; ++j) s -= l(j, i) * b[j];
    b[i] = s / l(i, i);
  }
}

}  // namespace

void check(const KernelParams& p, std::size_t dim) {
  if (!(p.k0 > 0.0)) throw ConfigError("kernel k0 must be positive");
  if (p.k.size() != dim) {
    throw ShapeError("kernel has " + std::to_string(p.k.size()) + " weights for dimension " + std::to_string(dim));
  }
  for (double k : p.k) {
    if (!(k > 0.0)) throw ConfigError("kernel weights must be positive");
  }
  if (!(p.jitter > 0.0)) throw ConfigError("kernel jitter must be positive");
}

double kernel(const ArchVector& a, const ArchVector& b, const KernelParams& p) {
  if (a.size() != b.size() || a.size() != p.k.size()) {
    throw ShapeError("kernel arguments have mismatched dimensions");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += p.k[i] * diff * diff;
  }
  return p.k0 * std::exp(-d);
}

Standardization TrialHistory::standardization() const {
  Standardization s;
  if (values.empty()) return s;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  s.mean = mean;
  if (values.size() == 1) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  s.std = std::max(std::sqrt(ss / static_cast<double>(values.size())), kStdFloor);
  return s;
}

Matrix gram(const TrialHistory& history, const KernelParams& p) {
  const std::size_t n = history.size();
  if (n == 0) throw ConfigError("gram matrix needs at least one trial");
  if (history.alphas.size() != n) throw ShapeError("history alphas and values differ in length");
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = p.k0;
    for (std::size_t j = 0; j < i; ++j) k(i, j) = k(j, i) = kernel(history.alphas[i], history.alphas[j], p);
  }
  return k;
}

Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows;
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw LinalgError("matrix not positive definite at pivot " + std::to_string(j));
    }
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

GpPosterior::GpPosterior(TrialHistory history, KernelParams p) : history_(std::move(history)), params_(std::move(p)) {
  if (history_.size() == 0) throw ConfigError("posterior needs at least one trial");
  check(params_, history_.alphas.front().size());
  scale_ = history_.standardization();

  const Matrix k = gram(history_, params_);
  const std::size_t n = history_.size();
  const double max_jitter = kMaxJitterFactor * params_.k0;
  Matrix kj;
  for (double jitter = params_.jitter;; jitter *= 10.0) {
    kj = k;
    for (std::size_t i = 0; i < n; ++i) kj(i, i) += jitter;
    try {
      factor_ = cholesky(kj);
      jitter_ = jitter;
      break;
    } catch (const LinalgError&) {
      if (jitter * 10.0 > max_jitter * (1.0 + 1e-12)) {
        throw LinalgError("gram matrix not factorisable with jitter up to " + std::to_string(max_jitter));
      }
    }
  }

  centred_.resize(n);
  for (std::size_t i = 0; i < n; ++i) centred_[i] = scale_.apply(history_.values[i]);
  weights_ = centred_;
  solve_lower(factor_, weights_);
  solve_upper_transposed(factor_, weights_);

  // Clustered trials make the Gram ill-conditioned; refine with an
  // extended-precision residual.
  for (int step = 0; step < 3; ++step) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      long double acc = centred_[i];
      for (std::size_t j = 0; j < n; ++j) acc -= static_cast<long double>(kj(i, j)) * weights_[j];
      r[i] = static_cast<double>(acc);
    }
    solve_lower(factor_, r);
    solve_upper_transposed(factor_, r);
    for (std::size_t i = 0; i < n; ++i) weights_[i] += r[i];
  }
}

Prediction GpPosterior::predict(const ArchVector& query) const {
  const std::size_t n = history_.size();
  if (query.size() != params_.k.size()) throw ShapeError("query dimension does not match the history");
  std::vector<double> kq(n);
  for (std::size_t i = 0; i < n; ++i) kq[i] = kernel(query, history_.alphas[i], params_);
  // Weights can be large with alternating signs; accumulate wide.
  long double acc = 0.0L;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<long double>(kq[i]) * weights_[i];
  const double mean = static_cast<double>(acc);
  solve_lower(factor_, kq);
  double reduction = 0.0;
  for (double v : kq) reduction += v * v;
  const double var = std::max(0.0, params_.k0 - reduction);
  return {scale_.invert(mean), var * scale_.std * scale_.std};
}

double GpPosterior::log_marginal_likelihood() const {
  const std::size_t n = history_.size();
  double fit = 0.0, logdet = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fit += centred_[i] * weights_[i];
    logdet += std::log(factor_(i, i));
  }
  return -0.5 * fit - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

double log_marginal_likelihood(const TrialHistory& history, const KernelParams& p) {
  return GpPosterior(history, p).log_marginal_likelihood();
}

KernelParams fit_kernel_params(const TrialHistory& history, const std::vector<KernelParams>& grid) {
  if (grid.empty()) throw ConfigError("kernel grid is empty");
  if (history.size() < 2) throw ConfigError("kernel fitting needs at least two trials");
  std::size_t best = 0;
  double best_ll = -INFINITY;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double ll;
    try {
      ll = log_marginal_likelihood(history, grid[i]);
    } catch (const LinalgError&) {
      continue;
    }
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }
  return grid[best];
}

std::vector<KernelParams> default_kernel_grid(std::size_t dim) {
  std::vector<KernelParams> grid;
  for (double k : {1.0, 4.0, 16.0, 64.0}) grid.push_back({1.0, std::vector<double>(dim, k), 1e-8});
  return grid;
}

void write_trial_jsonl(std::ostream& out, const TrialRecord& r) {
  nlohmann::ordered_json j;
  j["trial"] = r.trial;
  j["alpha"] = r.alpha.rates;
  j["value"] = r.value;
  j["sigma"] = r.sigma;
  j["T"] = r.samples;
  j["seed"] = r.seed;
  out << j.dump() << '\n';
}

std::vector<TrialRecord> read_trial_jsonl(std::istream& in) {
  std::vector<TrialRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrialRecord r;
      r.trial = j.at("trial").get<std::size_t>();
      r.alpha = ArchVector(j.at("alpha").get<std::vector<double>>());
      r.value = j.at("value").get<double>();
      r.sigma = j.at("sigma").get<double>();
      r.samples = j.at("T").get<std::size_t>();
      r.seed = j.at("seed").get<std::uint64_t>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(FormatError::Kind::bad_header, "trial log",
                        "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

TrialHistory history_from_records(const std::vector<TrialRecord>& records) {
  TrialHistory h;
  for (const auto& r : records) h.add(r.alpha, r.value);
  return h;
}

}  // namespace bayesft::gp
