#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "common/error.hpp"
#include "drift/drift.hpp"
#include "nn/train.hpp"
#include "test_support.hpp"

using namespace bayesft;
using namespace bayesft::drift;

namespace {

nn::NetworkSpec moons_mlp(bool batch_norm = false) {
  nn::NetworkSpec s;
  s.input_shape = {2};
  s.num_classes = 2;
  s.layers.push_back(nn::DenseSpec{16});
  if (batch_norm) s.layers.push_back(nn::NormalizationSpec{nn::NormKind::batch});
  s.layers.push_back(nn::ActivationSpec{});
  s.layers.push_back(nn::DropoutSlotSpec{0});
  s.layers.push_back(nn::DenseSpec{2});
  return s;
}

struct Trained {
  data::Splits splits;
  nn::Network net;
};

const Trained& trained_moons() {
  static const Trained t = [] {
    Trained out{fixture::two_moons_splits(1000, 0.1, 3), {}};
    out.net = nn::train(nn::init_xavier(moons_mlp(true), 1), out.splits.train, std::vector<double>{0.0},
                        nn::SgdConfig{0.1, 32, 30, 0});
    return out;
  }();
  return t;
}

}  // namespace

TEST(SampleDrift, MultiplierMomentsMatchLogNormal) {
  const double sigma = 0.5;
  const std::size_t n = 1000000;
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = std::exp(sigma * drift_normal(42, 1, "0.weight", i));
  double mean = 0;
  for (double v : m) mean += v;
  mean /= n;
  double c2 = 0, c4 = 0;
  for (double v : m) {
    const double d = (v - mean) * (v - mean);
    c2 += d;
    c4 += d * d;
  }
  const double var = c2 / (n - 1);
  const double m4 = c4 / n;

  const double want_mean = std::exp(sigma * sigma / 2);
  const double want_var = (std::exp(sigma * sigma) - 1) * std::exp(sigma * sigma);
  EXPECT_NEAR(mean, want_mean, 3 * std::sqrt(var / n));
  EXPECT_NEAR(mean, 1.13315, 0.01 * 1.13315);
  EXPECT_NEAR(var, want_var, 3 * std::sqrt((m4 - var * var) / n));

  std::nth_element(m.begin(), m.begin() + n / 2, m.end());
  const double median = m[n / 2];
  // Asymptotic std error of the median: 1 / (2 f(1) sqrt(n)) with f(1) = 1 / (sigma sqrt(2 pi)).
  EXPECT_NEAR(median, 1.0, 3 * sigma * std::sqrt(2 * M_PI) / (2 * std::sqrt(double(n))));
  EXPECT_NEAR(median, 1.0, 0.01);
}

TEST(SampleDrift, ZeroSigmaIsIdentity) {
  const auto& t = trained_moons();
  const auto drifted = sample_drift(t.net, DriftConfig{0.0, 1, 5}, 3);
  for (const auto& [name, p] : t.net.params) EXPECT_EQ(drifted.params.at(name).values, p.values) << name;
}

TEST(SampleDrift, SignsAndZerosPreserved) {
  auto net = nn::init_xavier(moons_mlp(), 2);
  net.params.at(nn::param_name(0, "weight")).values[3] = 0.0;
  const auto drifted = sample_drift(net, DriftConfig{1.5, 1, 8}, 1);
  for (const auto& [name, p] : net.params) {
    const auto& q = drifted.params.at(name).values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p.values[i] == 0.0) {
        EXPECT_EQ(q[i], 0.0);
      } else {
        EXPECT_GT(q[i] * p.values[i], 0.0) << name << "[" << i << "]";
      }
    }
  }
}

TEST(SampleDrift, ElementsArePureFunctionsOfTheirKey) {
  const auto net = nn::init_xavier(moons_mlp(), 2);
  const DriftConfig cfg{0.7, 1, 11};
  const auto a = sample_drift(net, cfg, 4);
  // Evaluation order of draws does not matter.
  sample_drift(net, cfg, 9);
  const auto b = sample_drift(net, cfg, 4);
  for (const auto& [name, p] : a.params) EXPECT_EQ(b.params.at(name).values, p.values);
  const auto& w = net.params.at(nn::param_name(0, "weight"));
  const auto& dw = a.params.at(nn::param_name(0, "weight"));
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(dw.values[i], w.values[i] * std::exp(0.7 * drift_normal(11, 4, nn::param_name(0, "weight"), i)));
  }
  EXPECT_NE(drift_normal(11, 4, "a", 0), drift_normal(11, 5, "a", 0));
  EXPECT_NE(drift_normal(11, 4, "a", 0), drift_normal(12, 4, "a", 0));
  EXPECT_NE(drift_normal(11, 4, "a", 0), drift_normal(11, 4, "b", 0));
}

TEST(SampleDrift, WeightsOnlyAndBufferHandling) {
  const auto& t = trained_moons();
  DriftConfig cfg{0.8, 1, 3, PerturbSet::weights_only};
  const auto w_only = sample_drift(t.net, cfg, 1);
  cfg.perturb_set = PerturbSet::all_trainable;
  const auto all = sample_drift(t.net, cfg, 1);
  for (const auto& [name, p] : t.net.params) {
    const bool weight = name.ends_with(".weight");
    if (weight) {
      EXPECT_NE(w_only.params.at(name).values, p.values) << name;
    } else {
      EXPECT_EQ(w_only.params.at(name).values, p.values) << name;
    }
    EXPECT_NE(all.params.at(name).values, p.values) << name;
  }
  ASSERT_FALSE(t.net.buffers.empty());
  for (const auto& [name, b] : t.net.buffers) {
    EXPECT_EQ(all.buffers.at(name).values, b.values) << name;
    EXPECT_EQ(w_only.buffers.at(name).values, b.values) << name;
  }
}

TEST(SampleDrift, RejectsBadConfig) {
  const auto net = nn::init_xavier(moons_mlp(), 2);
  EXPECT_THROW(sample_drift(net, DriftConfig{-0.1, 1, 0}, 1), ConfigError);
  EXPECT_THROW(sample_drift(net, DriftConfig{NAN, 1, 0}, 1), ConfigError);
  EXPECT_THROW(check(DriftConfig{0.5, 0, 0}), ConfigError);
}

TEST(RobustObjective, ZeroSigmaIsNegativeCleanLoss) {
  const auto& t = trained_moons();
  const auto clean = nn::evaluate(t.net, t.splits.valid);
  const auto est = mc_robust_objective(t.net, ArchVector({0.3}), t.splits.valid, DriftConfig{0.0, 7, 1});
  EXPECT_EQ(est.mean_objective, -clean.loss);
  EXPECT_EQ(est.std_error, 0.0);
  EXPECT_EQ(est.per_sample.size(), 7u);
  EXPECT_EQ(est.clamped_samples, 0u);
}

TEST(RobustObjective, SingleSampleMatchesDirectDrift) {
  const auto& t = trained_moons();
  const DriftConfig cfg{0.6, 1, 77};
  const auto est = mc_robust_objective(t.net, ArchVector({0.0}), t.splits.valid, cfg, Metric::neg_loss, 5);
  const auto direct = nn::evaluate(sample_drift(t.net, cfg, 5), t.splits.valid);
  EXPECT_EQ(est.mean_objective, -direct.loss);
  EXPECT_EQ(est.std_error, 0.0);
  const auto acc = mc_robust_objective(t.net, ArchVector({0.0}), t.splits.valid, cfg, Metric::accuracy, 5);
  EXPECT_EQ(acc.mean_objective, direct.accuracy);
}

TEST(RobustObjective, DropoutRateDoesNotEnterEvaluation) {
  const auto& t = trained_moons();
  const DriftConfig cfg{0.6, 5, 77};
  EXPECT_EQ(mc_robust_objective(t.net, ArchVector({0.0}), t.splits.valid, cfg).mean_objective,
            mc_robust_objective(t.net, ArchVector({0.8}), t.splits.valid, cfg).mean_objective);
}

TEST(RobustObjective, PooledMeanOfShardsEqualsLongRun) {
  const auto& t = trained_moons();
  const DriftConfig longcfg{0.9, 12, 31};
  const auto whole = mc_robust_objective(t.net, ArchVector({0.0}), t.splits.valid, longcfg);
  DriftConfig shard{0.9, 4, 31};
  double pooled = 0;
  std::vector<double> joined;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const auto part = mc_robust_objective(t.net, ArchVector({0.0}), t.splits.valid, shard, Metric::neg_loss, 1 + 4 * k);
    pooled += part.mean_objective / 3;
    joined.insert(joined.end(), part.per_sample.begin(), part.per_sample.end());
  }
  EXPECT_EQ(joined, whole.per_sample);
  EXPECT_NEAR(pooled, whole.mean_objective, 1e-12 * std::abs(whole.mean_objective));
}

TEST(RobustObjective, ExtremeDriftIsClampedNotFatal) {
  const auto& t = trained_moons();
  const auto est = mc_robust_objective(t.net, ArchVector({0.0}), t.splits.valid, DriftConfig{400.0, 6, 2});
  EXPECT_GT(est.clamped_samples, 0u);
  for (double s : est.per_sample) {
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_GE(s, -kLossClamp);
  }
  const auto rows = drift_accuracy_sweep(t.net, ArchVector({0.0}), t.splits.valid, {400.0}, 6, 2);
  EXPECT_EQ(rows[0].clamped_samples, est.clamped_samples);
  EXPECT_TRUE(std::isfinite(rows[0].mean_loss));
}

TEST(RobustObjective, StdErrorShrinksAsOneOverRootT) {
  const auto& t = trained_moons();
  auto spread = [&](std::size_t samples) {
    std::vector<double> us;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      us.push_back(mc_robust_objective(t.net, ArchVector({0.0}), t.splits.train, DriftConfig{0.6, samples, 1000 + seed})
                       .mean_objective);
    }
    return mean_std(us).std;
  };
  const double ratio = spread(100) / spread(25);
  EXPECT_GE(ratio, 0.35);
  EXPECT_LE(ratio, 0.70);
}

TEST(Sweep, ZeroSigmaRowIsCleanAccuracy) {
  const auto& t = trained_moons();
  const auto rows = drift_accuracy_sweep(t.net, ArchVector({0.0}), t.splits.test, {0.0}, 9, 4);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].mean_accuracy, nn::evaluate_accuracy(t.net, t.splits.test));
  EXPECT_EQ(rows[0].std_accuracy, 0.0);
  EXPECT_EQ(rows[0].std_loss, 0.0);
  EXPECT_EQ(rows[0].samples, 9u);
  EXPECT_EQ(rows[0].seed, 4u);
  EXPECT_THROW(drift_accuracy_sweep(t.net, ArchVector({0.0}), t.splits.test, {}, 9, 4), ConfigError);
  EXPECT_THROW(drift_accuracy_sweep(t.net, ArchVector({0.0}), t.splits.test, {-0.3}, 9, 4), ConfigError);
}

TEST(Sweep, AccuracyDeclinesAcrossTheGrid) {
  const auto& t = trained_moons();
  const auto rows = drift_accuracy_sweep(t.net, ArchVector({0.0}), t.splits.test, {0.0, 0.3, 0.6, 0.9, 1.2, 1.5}, 50, 6);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double noise = 2 * std::hypot(rows[i].std_accuracy, rows[i - 1].std_accuracy) / std::sqrt(50.0);
    EXPECT_LE(rows[i].mean_accuracy, rows[i - 1].mean_accuracy + noise) << "sigma " << rows[i].sigma;
  }
  EXPECT_LT(rows.back().mean_accuracy, rows.front().mean_accuracy);
}

TEST(Sweep, MnistMlpDegradesBetweenLowAndHighDrift) {
  if (!fixture::have_mnist()) GTEST_SKIP() << "MNIST files not found in " << fixture::mnist_dir();
  const auto all = data::load_mnist_idx(fixture::mnist_images(), fixture::mnist_labels());
  const auto splits = data::split(all, {0.7, 0.1, 0.2}, 0);
  nn::NetworkSpec spec;
  spec.input_shape = {1, 28, 28};
  spec.num_classes = 10;
  spec.layers = {nn::FlattenSpec{}, nn::DenseSpec{256}, nn::ActivationSpec{}, nn::DenseSpec{128},
                 nn::ActivationSpec{}, nn::DenseSpec{10}};
  const auto net = nn::train(nn::init_xavier(spec, 0), splits.train, {}, nn::SgdConfig{0.05, 128, 5, 0});
  const auto rows = drift_accuracy_sweep(net, ArchVector(), splits.test, {0.3, 0.9}, 50, 0);
  const double pooled = std::sqrt((rows[0].std_accuracy * rows[0].std_accuracy +
                                   rows[1].std_accuracy * rows[1].std_accuracy) / 2);
  EXPECT_LT(rows[1].mean_accuracy, rows[0].mean_accuracy - 2 * pooled);
}

TEST(Sweep, CsvHeaderAndRowFormat) {
  std::vector<SweepRow> rows{{0.0, 0.5, 0.0, 0.25, 0.0, 3, 7, 0}, {0.3, 0.4, 0.1, 0.3, 0.05, 3, 7, 1}};
  std::ostringstream out;
  write_sweep_csv(out, rows);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sigma,mean_accuracy,std_accuracy,mean_loss,std_loss,T,seed,clamped_samples");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0.5,0,0.25,0,3,7,0");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 4), "0.3,");
  EXPECT_EQ(line.substr(line.size() - 6), ",3,7,1");
}

TEST(MeanStd, SampleDeviation) {
  EXPECT_EQ(mean_std({}).mean, 0.0);
  EXPECT_EQ(mean_std({2.0}).std, 0.0);
  const auto ms = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(ms.mean, 2.5);
  EXPECT_DOUBLE_EQ(ms.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(mean_std(std::vector<double>(11, 0.1)).std, 0.0);
}
