#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "common/arch_vector.hpp"
#include "data/dataset.hpp"
#include "nn/network.hpp"

namespace bayesft::drift {

enum class PerturbSet { all_trainable, weights_only };

struct DriftConfig {
  double sigma = 0.0;         // std of the log-multiplier
  std::size_t samples = 20;   // Monte-Carlo draws T
  std::uint64_t seed = 0;
  PerturbSet perturb_set = PerturbSet::all_trainable;
};

void check(const DriftConfig& cfg);

// Per-sample loss recorded when a drifted network produces a non-finite loss.
inline constexpr double kLossClamp = 1e6;

// Standard normal for one parameter element of one drift draw. A pure function
// of its arguments, so draws can be generated in any order.
double drift_normal(std::uint64_t seed, std::uint64_t draw_index, std::string_view param, std::size_t element);

// Copy of `net` with each perturbed parameter element multiplied by exp(sigma * z),
// z = drift_normal(seed, draw_index, name, element). Batch-norm running
// statistics are left alone.
nn::Network sample_drift(const nn::Network& net, const DriftConfig& cfg, std::uint64_t draw_index);

enum class Metric { neg_loss, accuracy };

struct DrawResult {
  double loss = 0.0;  // clamped to kLossClamp when non-finite
  double accuracy = 0.0;
  bool clamped = false;
};

// Evaluates draws first_draw .. first_draw + cfg.samples - 1 on `data`.
std::vector<DrawResult> evaluate_draws(const nn::Network& net, const data::DatasetSplit& data, const DriftConfig& cfg,
                                       std::uint64_t first_draw = 1);

struct RobustEstimate {
  double mean_objective = 0.0;
  double std_error = 0.0;  // sample std (n - 1) / sqrt(T); 0 for T = 1
  std::vector<double> per_sample;
  Metric metric = Metric::neg_loss;
  std::size_t clamped_samples = 0;
};

// Monte-Carlo estimate of the drift-marginalised objective. For neg_loss each
// sample is -loss_t, so mean_objective = -(1/T) sum loss_t. Dropout is inactive.
RobustEstimate mc_robust_objective(const nn::Network& net, const ArchVector& alpha, const data::DatasetSplit& data,
                                   const DriftConfig& cfg, Metric metric = Metric::neg_loss,
                                   std::uint64_t first_draw = 1);

struct SweepRow {
  double sigma = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_loss = 0.0;
  double std_loss = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::size_t clamped_samples = 0;
};

// One row per sigma, each from draws 1..T of the same seed (so every sigma
// scales the same underlying normals).
std::vector<SweepRow> drift_accuracy_sweep(const nn::Network& net, const ArchVector& alpha,
                                           const data::DatasetSplit& data, const std::vector<double>& sigmas,
                                           std::size_t samples, std::uint64_t seed,
                                           PerturbSet perturb_set = PerturbSet::all_trainable);

inline constexpr const char* kSweepCsvHeader =
    "sigma,mean_accuracy,std_accuracy,mean_loss,std_loss,T,seed,clamped_samples";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// Mean and sample standard deviation (n - 1 denominator, 0 when n < 2).
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& xs);

}  // namespace bayesft::drift
