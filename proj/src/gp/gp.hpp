#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "common/arch_vector.hpp"

namespace bayesft::gp {

// Small dense row-major matrix; n stays in the tens here.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Exponential ARD kernel k0 * exp(-sum_i k_i (a_i - b_i)^2).
struct KernelParams {
  double k0 = 1.0;
  std::vector<double> k;  // one weight per dimension
  double jitter = 1e-8;   // initial diagonal jitter, escalated on failure
};

void check(const KernelParams& p, std::size_t dim);

double kernel(const ArchVector& a, const ArchVector& b, const KernelParams& p);

struct Standardization {
  double mean = 0.0;
  double std = 1.0;
  double apply(double v) const { return (v - mean) / std; }
  double invert(double z) const { return mean + std * z; }
};

inline constexpr double kStdFloor = 1e-8;

// Raw trial record: alphas[i] was observed with objective values[i].
struct TrialHistory {
  std::vector<ArchVector> alphas;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  void add(ArchVector alpha, double value) {
    alphas.push_back(std::move(alpha));
    values.push_back(value);
  }
  // Mean and population std of the values, std floored at kStdFloor. A single
  // observation uses std = 1 so the prior keeps unit scale.
  Standardization standardization() const;
};

Matrix gram(const TrialHistory& history, const KernelParams& p);

// Lower-triangular L with L L^T = a. Throws LinalgError if a is not
// numerically positive definite.
Matrix cholesky(const Matrix& a);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

inline constexpr double kMaxJitterFactor = 1e-2;

// Posterior over the objective given a history. Immutable once built.
class GpPosterior {
 public:
  // Factorises K + jitter*I, raising jitter x10 from p.jitter up to 1e-2*k0.
  GpPosterior(TrialHistory history, KernelParams p);

  Prediction predict(const ArchVector& query) const;

  // Gaussian log marginal likelihood of the standardised values.
  double log_marginal_likelihood() const;

  const KernelParams& params() const { return params_; }
  const TrialHistory& history() const { return history_; }
  const Standardization& standardization() const { return scale_; }
  const Matrix& factor() const { return factor_; }
  double jitter_used() const { return jitter_; }

 private:
  TrialHistory history_;
  KernelParams params_;
  Standardization scale_;
  Matrix factor_;
  std::vector<double> weights_;  // (K + jitter I)^-1 y~
  std::vector<double> centred_;  // y~
  double jitter_ = 0.0;
};

inline Prediction posterior(const GpPosterior& gp, const ArchVector& query) { return gp.predict(query); }

double log_marginal_likelihood(const TrialHistory& history, const KernelParams& p);

// Grid candidate with the highest log marginal likelihood; first wins ties.
KernelParams fit_kernel_params(const TrialHistory& history, const std::vector<KernelParams>& grid);

// k0 = 1 and a shared k_i in {1, 4, 16, 64}.
std::vector<KernelParams> default_kernel_grid(std::size_t dim);

// One line of the JSON-lines trial log.
struct TrialRecord {
  std::size_t trial = 0;
  ArchVector alpha;
  double value = 0.0;
  double sigma = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

void write_trial_jsonl(std::ostream& out, const TrialRecord& r);
std::vector<TrialRecord> read_trial_jsonl(std::istream& in);
TrialHistory history_from_records(const std::vector<TrialRecord>& records);

}  // namespace bayesft::gp
