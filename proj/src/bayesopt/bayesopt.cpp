#include "bayesopt/bayesopt.hpp"

#include <chrono>
#include <cmath>
#include <optional>

namespace bayesft::bo {

void check(const SearchConfig& cfg) {
  if (cfg.max_trials < 2) throw ConfigError("max_trials must be at least 2");
  if (cfg.candidate_pool_size == 0) throw ConfigError("candidate_pool_size must be at least 1");
  if (cfg.patience == 0) throw ConfigError("patience must be at least 1");
  if (!(cfg.r_max > 0.0 && cfg.r_max < 1.0)) throw ConfigError("r_max must lie in (0, 1)");
  if (cfg.refit_every == 0) throw ConfigError("refit_every must be at least 1");
  if (!(cfg.acquisition.beta >= 0.0)) throw ConfigError("UCB beta must be non-negative");
}

std::string regime_name(ThetaRegime r) { return r == ThetaRegime::retrain ? "retrain" : "warm_start"; }

ArchVector random_arch(std::size_t dim, double r_max, Rng& rng) {
  ArchVector a = ArchVector::zeros(dim);
  for (std::size_t i = 0; i < dim; ++i) a[i] = rng.uniform(0.0, r_max);
  return a;
}

std::vector<ArchVector> draw_candidate_pool(std::size_t dim, std::size_t count, double r_max, Rng& rng) {
  std::vector<ArchVector> pool;
  pool.reserve(count);
  for (std::size_t c = 0; c < count; ++c) pool.push_back(random_arch(dim, r_max, rng));
  return pool;
}

double acquisition_score(const gp::Prediction& p, const Acquisition& a) {
  if (a.kind == AcquisitionKind::posterior_mean) return p.mean;
  return p.mean + a.beta * std::sqrt(p.variance);
}

std::size_t argmax_first(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

ArchVector propose_next(const gp::GpPosterior& gp, std::size_t dim, const SearchConfig& cfg, Rng& rng) {
  const auto pool = draw_candidate_pool(dim, cfg.candidate_pool_size, cfg.r_max, rng);
  std::vector<double> scores;
  scores.reserve(pool.size());
  for (const auto& c : pool) scores.push_back(acquisition_score(gp.predict(c), cfg.acquisition));
  return pool[argmax_first(scores)];
}

SearchResult run_search(const Objective& objective, std::size_t dim, const SearchConfig& cfg, Proposer proposer) {
  check(cfg);
  if (dim == 0) throw ConfigError("search space has no dimensions");
  const auto grid = cfg.kernel_grid.empty() ? gp::default_kernel_grid(dim) : cfg.kernel_grid;
  for (const auto& p : grid) gp::check(p, dim);

  Rng rng(derive_seed(cfg.seed, 0xb0));
  SearchResult result;
  gp::KernelParams kernel = grid[std::min<std::size_t>(1, grid.size() - 1)];
  std::optional<std::size_t> fitted_at;
  std::size_t stale = 0;

  ArchVector next = random_arch(dim, cfg.r_max, rng);
  for (std::size_t trial = 1; trial <= cfg.max_trials; ++trial) {
    const auto start = std::chrono::steady_clock::now();
    const double value = objective(next, trial);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.add(next, value);
    result.per_trial_log.push_back({trial, next, value, seconds, "", false});

    if (trial == 1 || value > result.best_value) {
      result.best_value = value;
      result.best_alpha = next;
      result.best_trial = trial;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
    if (trial == cfg.max_trials) break;

    if (proposer == Proposer::random) {
      next = random_arch(dim, cfg.r_max, rng);
      continue;
    }
    const std::size_t n = result.history.size();
    if (n >= 2 && (!fitted_at || n - *fitted_at >= cfg.refit_every)) {
      kernel = gp::fit_kernel_params(result.history, grid);
      fitted_at = n;
    }
    const gp::GpPosterior posterior(result.history, kernel);
    next = propose_next(posterior, dim, cfg, rng);
  }
  return result;
}

namespace {

BayesFtResult run_driver(const data::Splits& data, const BayesFtConfig& cfg, Proposer proposer) {
  data::check_split(data.train);
  data::check_split(data.valid);
  data::check_split(data.test);
  drift::check(cfg.drift);
  nn::check_sgd(cfg.sgd);
  const std::size_t dim = nn::dropout_slot_count(cfg.spec);
  if (dim == 0) throw ConfigError("network has no dropout slots to search");

  const nn::Network initial = nn::init_xavier(cfg.spec, cfg.search.seed);
  nn::Network evolving = initial;
  std::vector<bool> diverged;

  auto objective = [&](const ArchVector& alpha, std::size_t trial) {
    nn::SgdConfig sgd = cfg.sgd;
    const nn::Network* start = &initial;
    if (cfg.regime == ThetaRegime::warm_start) {
      sgd.seed = derive_seed(cfg.sgd.seed, trial);
      start = &evolving;
    }
    try {
      nn::Network trained = nn::train(*start, data.train, alpha.span(), sgd);
      const double u = drift::mc_robust_objective(trained, alpha, data.valid, cfg.drift).mean_objective;
      if (cfg.regime == ThetaRegime::warm_start) evolving = std::move(trained);
      diverged.push_back(false);
      return u;
    } catch (const DivergenceError&) {
      diverged.push_back(true);
      return -drift::kLossClamp;
    }
  };

  SearchResult search = run_search(objective, dim, cfg.search, proposer);
  for (std::size_t i = 0; i < search.per_trial_log.size(); ++i) {
    search.per_trial_log[i].regime = regime_name(cfg.regime);
    search.per_trial_log[i].diverged = diverged.at(i);
  }

  BayesFtResult out;
  out.best_alpha = search.best_alpha;
  out.best_value = search.best_value;
  out.best_trial = search.best_trial;
  out.history = std::move(search.history);
  out.per_trial_log = std::move(search.per_trial_log);
  out.best_network = nn::train(initial, data.train, out.best_alpha.span(), cfg.sgd);
  out.clean_test_accuracy = nn::evaluate_accuracy(out.best_network, data.test);
  return out;
}

}  // namespace

BayesFtResult run_bayesft(const data::Splits& data, const BayesFtConfig& cfg) {
  return run_driver(data, cfg, Proposer::bayesian);
}

BayesFtResult run_random_search(const data::Splits& data, const BayesFtConfig& cfg) {
  return run_driver(data, cfg, Proposer::random);
}

}  // namespace bayesft::bo
