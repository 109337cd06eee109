#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "common/arch_vector.hpp"
#include "common/rng.hpp"
#include "data/dataset.hpp"
#include "drift/drift.hpp"
#include "gp/gp.hpp"
#include "nn/network.hpp"
#include "nn/train.hpp"

namespace bayesft::bo {

enum class AcquisitionKind { ucb, posterior_mean };

struct Acquisition {
  AcquisitionKind kind = AcquisitionKind::ucb;
  double beta = 2.0;
};

// Loop controls shared by the Bayesian and random-search drivers.
struct SearchConfig {
  std::size_t max_trials = 15;
  Acquisition acquisition;
  std::size_t candidate_pool_size = 2048;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  double r_max = kMaxDropoutRate;
  std::size_t refit_every = 5;
  std::vector<gp::KernelParams> kernel_grid;  // empty: default_kernel_grid(dim)
};

void check(const SearchConfig& cfg);

// How network weights relate across trials.
//   retrain:    each trial trains a fresh copy of the initial weights under its
//               own alpha, so a trial's value depends on alpha alone.
//   warm_start: one evolving weight set, trained E more epochs under each new
//               alpha, and the trial's value is measured right after.
enum class ThetaRegime { retrain, warm_start };

std::string regime_name(ThetaRegime r);

struct BayesFtConfig {
  nn::NetworkSpec spec;
  nn::SgdConfig sgd;
  drift::DriftConfig drift;
  SearchConfig search;
  ThetaRegime regime = ThetaRegime::retrain;
};

struct TrialLog {
  std::size_t trial = 0;  // 1-based
  ArchVector alpha;
  double value = 0.0;
  double wall_seconds = 0.0;
  std::string regime;
  bool diverged = false;
};

struct SearchResult {
  ArchVector best_alpha;
  double best_value = 0.0;
  std::size_t best_trial = 0;
  gp::TrialHistory history;
  std::vector<TrialLog> per_trial_log;
};

struct BayesFtResult {
  ArchVector best_alpha;
  nn::Network best_network;
  double best_value = 0.0;
  std::size_t best_trial = 0;
  gp::TrialHistory history;
  std::vector<TrialLog> per_trial_log;
  double clean_test_accuracy = 0.0;
};

// ---- acquisition ------------------------------------------------------------------

std::vector<ArchVector> draw_candidate_pool(std::size_t dim, std::size_t count, double r_max, Rng& rng);

ArchVector random_arch(std::size_t dim, double r_max, Rng& rng);

double acquisition_score(const gp::Prediction& p, const Acquisition& a);

// Index of the largest score; the lowest index wins ties.
std::size_t argmax_first(std::span<const double> scores);

// Draws a candidate pool from `rng` and returns its acquisition argmax.
ArchVector propose_next(const gp::GpPosterior& gp, std::size_t dim, const SearchConfig& cfg, Rng& rng);

// ---- drivers ------------------------------------------------------------------------

enum class Proposer { bayesian, random };

// Objective called with the candidate and its 1-based trial number.
using Objective = std::function<double(const ArchVector&, std::size_t)>;

// Maximises `objective` over [0, r_max]^dim. The first candidate is uniform
// random for both proposers; the loop stops at max_trials or after `patience`
// consecutive trials without a strict incumbent improvement.
SearchResult run_search(const Objective& objective, std::size_t dim, const SearchConfig& cfg, Proposer proposer);

// Alternates SGD on the training split with drift-robust evaluation of alpha on
// the validation split. The test split is read once, after the search, to
// report the clean accuracy of the retrained incumbent.
BayesFtResult run_bayesft(const data::Splits& data, const BayesFtConfig& cfg);

BayesFtResult run_random_search(const data::Splits& data, const BayesFtConfig& cfg);

}  // namespace bayesft::bo
