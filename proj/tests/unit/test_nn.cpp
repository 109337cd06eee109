#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <sstream>

#include "common/error.hpp"
#include "data/dataset.hpp"
#include "nn/network.hpp"
#include "nn/network_spec.hpp"
#include "nn/serialize.hpp"
#include "nn/train.hpp"
#include "test_support.hpp"

using namespace bayesft;
using namespace bayesft::nn;

namespace {

NetworkSpec mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes,
                Activation act = Activation::relu) {
  NetworkSpec s;
  s.input_shape = {in};
  s.num_classes = classes;
  std::size_t slot = 0;
  for (auto w : hidden) {
    s.layers.push_back(DenseSpec{w});
    s.layers.push_back(ActivationSpec{act});
    s.layers.push_back(DropoutSlotSpec{slot++});
  }
  s.layers.push_back(DenseSpec{classes});
  return s;
}

void zero_params(Network& net) {
  for (auto& [name, t] : net.params) std::fill(t.values.begin(), t.values.end(), 0.0);
}

}  // namespace

TEST(NetworkSpec, ValidatesShapesThroughLenetStack) {
  NetworkSpec s;
  s.input_shape = {1, 28, 28};
  s.num_classes = 10;
  s.layers = {Conv2dSpec{8, 5}, ActivationSpec{}, MaxPool2dSpec{2}, DropoutSlotSpec{0},
              Conv2dSpec{16, 5}, ActivationSpec{}, MaxPool2dSpec{2}, DropoutSlotSpec{1},
              FlattenSpec{}, DenseSpec{64}, ActivationSpec{}, DropoutSlotSpec{2}, DenseSpec{10}};
  const auto shapes = validate(s);
  EXPECT_EQ(shapes[1], (Shape{8, 24, 24}));
  EXPECT_EQ(shapes[3], (Shape{8, 12, 12}));
  EXPECT_EQ(shapes[7], (Shape{16, 4, 4}));
  EXPECT_EQ(shapes[9], (Shape{256}));
  EXPECT_EQ(shapes.back(), (Shape{10}));
  EXPECT_EQ(dropout_slot_count(s), 3u);
  EXPECT_EQ(weight_layer_count(s), 4u);
}

TEST(NetworkSpec, ErrorsNameTheOffendingLayer) {
  auto s = mlp(4, {8, 8}, 3);
  s.layers[5] = DropoutSlotSpec{3};  // slots must count up from 0
  try {
    validate(s);
    FAIL() << "expected SpecError";
  } catch (const SpecError& e) {
    EXPECT_EQ(e.layer(), 5u);
  }

  auto last = mlp(4, {8}, 3);
  last.layers.back() = DenseSpec{4};
  EXPECT_THROW(validate(last), SpecError);

  auto after_last = mlp(4, {8}, 3);
  after_last.layers.push_back(DropoutSlotSpec{1});
  EXPECT_THROW(validate(after_last), SpecError);

  NetworkSpec conv_on_flat;
  conv_on_flat.input_shape = {16};
  conv_on_flat.num_classes = 2;
  conv_on_flat.layers = {Conv2dSpec{2, 3}, FlattenSpec{}, DenseSpec{2}};
  try {
    validate(conv_on_flat);
    FAIL() << "expected SpecError";
  } catch (const SpecError& e) {
    EXPECT_EQ(e.layer(), 0u);
  }
}

TEST(NetworkSpec, JsonRoundTrip) {
  NetworkSpec s;
  s.input_shape = {1, 12, 12};
  s.num_classes = 4;
  s.layers = {Conv2dSpec{3, 3}, NormalizationSpec{NormKind::batch}, ActivationSpec{Activation::gelu},
              MaxPool2dSpec{2}, DropoutSlotSpec{0}, FlattenSpec{}, DenseSpec{6},
              NormalizationSpec{NormKind::layer}, ActivationSpec{Activation::elu}, DropoutSlotSpec{1}, DenseSpec{4}};
  const auto j = to_json(s);
  const auto back = spec_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(j["layers"][1]["kind"], "normalization");
  EXPECT_THROW(spec_from_json(nlohmann::json::parse(R"({"layers":[{"kind":"pool3d"}],"input_shape":[2],"num_classes":2})")),
               SpecError);
}

TEST(Init, XavierBoundsAndDefaults) {
  NetworkSpec s = mlp(4, {4}, 3);
  s.layers.insert(s.layers.begin() + 1, NormalizationSpec{NormKind::batch});
  const auto net = init_xavier(s, 11);
  const double bound = std::sqrt(6.0 / 8.0);
  for (double w : net.params.at("layer00.weight").values) {
    EXPECT_LE(std::abs(w), bound);
  }
  for (double b : net.params.at("layer00.bias").values) EXPECT_EQ(b, 0.0);
  for (double v : net.params.at("layer01.beta").values) EXPECT_EQ(v, 1.0);
  for (double v : net.params.at("layer01.gamma").values) EXPECT_EQ(v, 0.0);
  for (double v : net.buffers.at("layer01.running_var").values) EXPECT_EQ(v, 1.0);
}

TEST(Init, DeterministicAndSeedSensitive) {
  const auto s = mlp(10, {7}, 3);
  const auto a = init_xavier(s, 5), b = init_xavier(s, 5), c = init_xavier(s, 6);
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.params.at("layer00.weight"), c.params.at("layer00.weight"));
}

TEST(Init, WeightMomentsMatchUniform) {
  const auto net = init_xavier(mlp(100, {50}, 3), 7);
  const auto& w = net.params.at("layer00.weight").values;
  ASSERT_EQ(w.size(), 5000u);
  const double bound = std::sqrt(6.0 / 150.0);
  double mean = 0.0, sq = 0.0;
  for (double v : w) mean += v;
  mean /= w.size();
  for (double v : w) sq += (v - mean) * (v - mean);
  const double var = sq / (w.size() - 1);
  const double se = std::sqrt(bound * bound / 3.0 / w.size());
  EXPECT_LT(std::abs(mean), 3 * se);
  EXPECT_NEAR(var, bound * bound / 3.0, 0.1 * bound * bound / 3.0);
}

TEST(Forward, ZeroAlphaEqualsNetworkWithoutSlots) {
  const auto with = mlp(5, {6, 4}, 3);
  NetworkSpec without = with;
  without.layers.erase(std::remove_if(without.layers.begin(), without.layers.end(),
                                      [](const LayerSpec& l) { return std::holds_alternative<DropoutSlotSpec>(l); }),
                       without.layers.end());
  auto a = init_xavier(with, 2);
  auto b = init_xavier(without, 2);
  // Layer indices shift once the slots are gone, so copy by position.
  b.params["layer00.weight"] = a.params["layer00.weight"];
  b.params["layer00.bias"] = a.params["layer00.bias"];
  b.params["layer02.weight"] = a.params["layer03.weight"];
  b.params["layer02.bias"] = a.params["layer03.bias"];
  b.params["layer04.weight"] = a.params["layer06.weight"];
  b.params["layer04.bias"] = a.params["layer06.bias"];
  const auto x = fixture::random_batch({5}, 7, 1);
  const std::vector<double> alpha{0.0, 0.0};
  EXPECT_EQ(forward(a, x, alpha).values, forward(b, x, {}).values);
}

TEST(Forward, IdentityDenseWithRelu) {
  NetworkSpec s;
  s.input_shape = {3};
  s.num_classes = 3;
  s.layers = {DenseSpec{3}, ActivationSpec{Activation::relu}, DropoutSlotSpec{0}, DenseSpec{3}};
  auto net = init_xavier(s, 0);
  zero_params(net);
  for (const char* w : {"layer00.weight", "layer03.weight"}) {
    for (int i = 0; i < 3; ++i) net.params[w].values[i * 3 + i] = 1.0;
  }
  const Tensor x({2, 3}, {0.5, 1.5, 0.0, 2.0, 0.25, 3.0});
  EXPECT_EQ(forward(net, x, std::vector<double>{0.0}).values, x.values);
}

TEST(Forward, AlphaValidation) {
  const auto net = init_xavier(mlp(3, {4, 4}, 2), 0);
  const auto x = fixture::random_batch({3}, 2, 0);
  EXPECT_THROW(forward(net, x, std::vector<double>{0.1}), ShapeError);
  EXPECT_THROW(forward(net, x, std::vector<double>{0.1, 1.0}), DomainError);
  EXPECT_THROW(forward(net, x, std::vector<double>{-0.1, 0.0}), DomainError);
}

TEST(Forward, InvertedDropoutExpectation) {
  // Constant activations into a slot at rate 0.5 followed by a linear layer:
  // the mask average over many passes must match eval mode.
  NetworkSpec s;
  s.input_shape = {4};
  s.num_classes = 3;
  s.layers = {DenseSpec{6}, ActivationSpec{Activation::relu}, DropoutSlotSpec{0}, DenseSpec{3}};
  auto net = init_xavier(s, 3);
  net.params["layer00.bias"].values.assign(6, 0.7);
  std::fill(net.params["layer00.weight"].values.begin(), net.params["layer00.weight"].values.end(), 0.0);
  const Tensor x({1, 4}, {1, 2, 3, 4});
  const std::vector<double> alpha{0.5};
  const auto expected = forward(net, x, alpha).values;

  net.train_mode = true;
  Rng rng(9);
  const int n = 10000;
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  for (int k = 0; k < n; ++k) {
    const auto y = forward(net, x, alpha, &rng).values;
    for (int c = 0; c < 3; ++c) {
      sum[c] += y[c];
      sq[c] += y[c] * y[c];
    }
  }
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / n;
    const double se = std::sqrt((sq[c] / n - mean * mean) / n);
    EXPECT_LT(std::abs(mean - expected[c]), 3 * se) << "unit " << c;
  }
}

TEST(Forward, TrainDropoutNeedsRng) {
  auto net = init_xavier(mlp(3, {4}, 2), 0);
  net.train_mode = true;
  EXPECT_THROW(forward(net, fixture::random_batch({3}, 2, 0), std::vector<double>{0.3}), DomainError);
}

TEST(Forward, SoftmaxRowsSumToOne) {
  const auto net = init_xavier(mlp(5, {8}, 10), 4);
  const auto p = softmax(forward(net, fixture::random_batch({5}, 20, 2), std::vector<double>{0.0}));
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 10; ++c) s += p.values[r * 10 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Forward, BatchNormTrainOutputIsStandardised) {
  // dense -> batch norm -> identity dense, so the logits are the normalised
  // features themselves (beta = 1, gamma = 0).
  NetworkSpec s;
  s.input_shape = {5};
  s.num_classes = 4;
  s.layers = {DenseSpec{4}, NormalizationSpec{NormKind::batch}, DenseSpec{4}};
  auto net = init_xavier(s, 1);
  auto& w2 = net.params["layer02.weight"].values;
  std::fill(w2.begin(), w2.end(), 0.0);
  for (int i = 0; i < 4; ++i) w2[i * 4 + i] = 1.0;
  net.params["layer00.bias"].values = {3.0, -1.0, 0.5, 10.0};
  net.train_mode = true;
  const auto x = fixture::random_batch({5}, 64, 3);
  Rng rng(0);
  const auto y = forward(net, x, {}, &rng);
  for (int o = 0; o < 4; ++o) {
    double m = 0, v = 0;
    for (int n = 0; n < 64; ++n) m += y.values[n * 4 + o];
    m /= 64;
    for (int n = 0; n < 64; ++n) v += (y.values[n * 4 + o] - m) * (y.values[n * 4 + o] - m);
    v /= 64;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }

  // Recorded batch statistics: mean and unbiased variance of the dense output.
  const auto& w = net.params["layer00.weight"].values;
  const auto& bias = net.params["layer00.bias"].values;
  const auto lg = loss_and_grads(net, x, fixture::random_labels(64, 4, 0), {}, &rng);
  for (int o = 0; o < 4; ++o) {
    std::vector<double> z(64);
    for (int n = 0; n < 64; ++n) {
      z[n] = bias[o];
      for (int i = 0; i < 5; ++i) z[n] += w[o * 5 + i] * x.values[n * 5 + i];
    }
    double m = 0, v = 0;
    for (double t : z) m += t;
    m /= 64;
    for (double t : z) v += (t - m) * (t - m);
    EXPECT_NEAR(lg.batch_stats.at("layer01.running_mean").values[o], m, 1e-12);
    EXPECT_NEAR(lg.batch_stats.at("layer01.running_var").values[o], v / 63, 1e-12);
  }
}

TEST(Loss, UniformLogitsGiveLogC) {
  auto net = init_xavier(mlp(6, {5}, 10), 0);
  zero_params(net);
  const auto x = fixture::random_batch({6}, 8, 0);
  const auto lg = loss_and_grads(net, x, fixture::random_labels(8, 10, 1), std::vector<double>{0.0});
  EXPECT_NEAR(lg.loss, std::log(10.0), 1e-15);
}

TEST(Loss, GradKeysMatchParams) {
  auto s = fixture::random_stack(4).spec;
  const auto net = init_xavier(s, 0);
  const auto lg = loss_and_grads(net, fixture::random_batch(s.input_shape, 3, 0), fixture::random_labels(3, 3, 0),
                                 std::vector<double>(dropout_slot_count(s), 0.0));
  ASSERT_EQ(lg.grads.size(), net.params.size());
  for (const auto& [name, t] : net.params) EXPECT_EQ(lg.grads.at(name).shape, t.shape) << name;
}

TEST(Loss, LabelOutOfRangeIsDomainError) {
  const auto net = init_xavier(mlp(3, {4}, 2), 0);
  const std::vector<int> y{0, 2};
  EXPECT_THROW(loss_and_grads(net, fixture::random_batch({3}, 2, 0), y, std::vector<double>{0.0}), DomainError);
}

TEST(Loss, DoublingTheBatchLeavesLossAndGrads) {
  const auto s = mlp(4, {6, 5}, 3, Activation::gelu);
  const auto net = init_xavier(s, 8);
  const auto x = fixture::random_batch({4}, 5, 1);
  const auto y = fixture::random_labels(5, 3, 2);
  Tensor xx({10, 4});
  std::vector<int> yy;
  for (int rep = 0; rep < 2; ++rep) {
    std::copy(x.values.begin(), x.values.end(), xx.values.begin() + rep * 20);
    yy.insert(yy.end(), y.begin(), y.end());
  }
  const std::vector<double> alpha{0.0, 0.0};
  const auto a = loss_and_grads(net, x, y, alpha);
  const auto b = loss_and_grads(net, xx, yy, alpha);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  for (const auto& [name, g] : a.grads) {
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g.values[i], b.grads.at(name).values[i], 1e-14) << name;
  }
}

TEST(Loss, NonFiniteForwardReportsLayer) {
  auto net = init_xavier(mlp(3, {4}, 2), 0);
  net.params["layer00.weight"].values[0] = std::numeric_limits<double>::infinity();
  const Tensor x({1, 3}, {1.0, 0.0, 0.0});
  try {
    loss_and_grads(net, x, std::vector<int>{0}, std::vector<double>{0.0});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), 0u);
  }
}

TEST(Gradients, MlpMatchesFiniteDifferences) {
  // 2-layer MLP, 8 samples, h = 1e-5.
  const auto s = mlp(5, {7, 6}, 4, Activation::elu);
  auto net = init_xavier(s, 3);
  fixture::jitter_params(net, 4);
  net.train_mode = true;
  const auto r = fixture::grad_check(net, fixture::random_batch({5}, 8, 5), fixture::random_labels(8, 4, 6),
                                     {0.0, 0.0}, 0);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(Gradients, EveryLayerKindMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    const auto stack = fixture::random_stack(seed);
    auto net = init_xavier(stack.spec, seed);
    fixture::jitter_params(net, seed + 100);
    net.train_mode = true;
    const auto r = fixture::grad_check(net, fixture::random_batch(stack.spec.input_shape, 6, seed + 200),
                                       fixture::random_labels(6, 3, seed + 300), stack.alpha, seed + 400);
    EXPECT_LT(r.max_rel_error, 1e-4) << stack.description << ": " << r.worst_param << "[" << r.worst_index << "]";
  }
}

TEST(Gradients, EvalModeBatchNormUsesRunningStats) {
  NetworkSpec s;
  s.input_shape = {4};
  s.num_classes = 3;
  s.layers = {DenseSpec{5}, NormalizationSpec{NormKind::batch}, ActivationSpec{Activation::gelu}, DenseSpec{3}};
  auto net = init_xavier(s, 1);
  fixture::jitter_params(net, 2);
  net.buffers["layer01.running_mean"].values = {0.1, -0.2, 0.3, 0.0, 0.5};
  net.buffers["layer01.running_var"].values = {1.5, 0.5, 2.0, 1.0, 0.8};
  net.train_mode = false;
  const auto r = fixture::grad_check(net, fixture::random_batch({4}, 4, 3), fixture::random_labels(4, 3, 4), {}, 0);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(Train, ZeroLearningRateKeepsParams) {
  const auto s = mlp(2, {8}, 2);
  const auto net = init_xavier(s, 0);
  const auto splits = fixture::two_moons_splits(200);
  const auto trained = train(net, splits.train, std::vector<double>{0.3}, {0.0, 16, 2, 1});
  EXPECT_EQ(trained.params, net.params);
  EXPECT_FALSE(trained.train_mode);
}

TEST(Train, DeterministicGivenSeed) {
  const auto s = mlp(2, {8}, 2);
  const auto splits = fixture::two_moons_splits(200);
  const auto a = train(init_xavier(s, 0), splits.train, std::vector<double>{0.3}, {0.1, 16, 3, 4});
  const auto b = train(init_xavier(s, 0), splits.train, std::vector<double>{0.3}, {0.1, 16, 3, 4});
  const auto c = train(init_xavier(s, 0), splits.train, std::vector<double>{0.3}, {0.1, 16, 3, 5});
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.params, c.params);
}

TEST(Train, TwoMoonsMlpFitsTrainingSet) {
  const auto splits = fixture::two_moons_splits(1000, 0.1, 3);
  const auto net = train(init_xavier(mlp(2, {32, 32}, 2), 0), splits.train, std::vector<double>{0.0, 0.0},
                         {0.1, 32, 200, 0});
  EXPECT_GE(evaluate_accuracy(net, splits.train), 0.95);
}

TEST(Train, BatchNormRunningStatsFollowEma) {
  NetworkSpec s;
  s.input_shape = {2};
  s.num_classes = 2;
  s.layers = {DenseSpec{3}, NormalizationSpec{NormKind::batch}, ActivationSpec{}, DenseSpec{2}};
  const auto net = init_xavier(s, 2);
  const auto splits = fixture::two_moons_splits(100);
  // One full batch at lr 0: the running stats take one EMA step toward the
  // statistics of the dense outputs over the whole training split.
  const auto trained = train(net, splits.train, {}, {0.0, splits.train.size(), 1, 0});
  const auto& w = net.params.at("layer00.weight").values;
  const std::size_t n = splits.train.size();
  for (int o = 0; o < 3; ++o) {
    std::vector<double> z(n);
    for (std::size_t r = 0; r < n; ++r) {
      z[r] = w[o * 2] * splits.train.inputs.values[2 * r] + w[o * 2 + 1] * splits.train.inputs.values[2 * r + 1];
    }
    double m = 0, v = 0;
    for (double t : z) m += t;
    m /= n;
    for (double t : z) v += (t - m) * (t - m);
    v /= (n - 1);
    EXPECT_NEAR(trained.buffers.at("layer01.running_mean").values[o], 0.1 * m, 1e-12);
    EXPECT_NEAR(trained.buffers.at("layer01.running_var").values[o], 0.9 + 0.1 * v, 1e-12);
  }
}

TEST(Train, DivergenceReportsEpochAndBatch) {
  const auto splits = fixture::two_moons_splits(200);
  try {
    train(init_xavier(mlp(2, {16}, 2), 0), splits.train, std::vector<double>{0.0}, {1e300, 16, 5, 0});
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_GE(e.batch(), 1u);
  }
}

TEST(Train, RejectsBadConfig) {
  const auto splits = fixture::two_moons_splits(100);
  const auto net = init_xavier(mlp(2, {4}, 2), 0);
  EXPECT_THROW(train(net, splits.train, std::vector<double>{0.0}, {-0.1, 16, 1, 0}), ConfigError);
  EXPECT_THROW(train(net, splits.train, std::vector<double>{0.0}, {0.1, 0, 1, 0}), ConfigError);
  EXPECT_THROW(train(net, splits.train, std::vector<double>{0.0}, {0.1, 16, 0, 0}), ConfigError);
}

TEST(Accuracy, PerfectOnOwnPredictions) {
  const auto net = init_xavier(mlp(3, {4}, 3), 1);
  data::DatasetSplit d;
  d.inputs = fixture::random_batch({3}, 1, 2);
  d.labels = predict(net, d.inputs);
  d.num_classes = 3;
  d.name = "one";
  EXPECT_EQ(evaluate_accuracy(net, d), 1.0);
}

TEST(Accuracy, AllZeroNetworkPicksClassZero) {
  auto net = init_xavier(mlp(3, {4}, 10), 1);
  zero_params(net);
  data::DatasetSplit d;
  d.inputs = fixture::random_batch({3}, 100, 2);
  for (int i = 0; i < 100; ++i) d.labels.push_back(i % 10);
  d.num_classes = 10;
  d.name = "balanced";
  EXPECT_DOUBLE_EQ(evaluate_accuracy(net, d), 0.1);
}

TEST(Accuracy, SubsetWithinBinomialBand) {
  const auto splits = fixture::two_moons_splits(1000, 0.3, 1);
  const auto net = train(init_xavier(mlp(2, {8}, 2), 0), splits.train, std::vector<double>{0.0}, {0.1, 32, 5, 0});
  data::DatasetSplit all = splits.train;
  const double p = evaluate_accuracy(net, all);
  const auto idx = data::shuffled_indices(all.size(), 4);
  const auto sub = all.subset({idx.begin(), idx.begin() + 100}, "sub");
  const double q = evaluate_accuracy(net, sub);
  EXPECT_LT(std::abs(q - p), 3 * std::sqrt(p * (1 - p) / 100) + 1e-12);
}

TEST(Accuracy, EmptyDatasetIsError) {
  const auto net = init_xavier(mlp(3, {4}, 2), 1);
  data::DatasetSplit d;
  d.inputs = Tensor({0, 3});
  d.num_classes = 2;
  EXPECT_THROW(evaluate_accuracy(net, d), Error);
}

TEST(Serialize, RoundTripIncludingBuffers) {
  NetworkSpec s = mlp(3, {4}, 2);
  s.layers.insert(s.layers.begin() + 1, NormalizationSpec{NormKind::batch});
  auto net = init_xavier(s, 3);
  fixture::jitter_params(net, 1);
  net.buffers["layer01.running_mean"].values = {1, 2, 3, 4};
  std::stringstream buf;
  write_parameters(buf, net);
  const auto back = read_parameters(buf, s);
  EXPECT_EQ(back.params, net.params);
  EXPECT_EQ(back.buffers, net.buffers);
}

TEST(Serialize, ByteLayout) {
  NetworkSpec s;
  s.input_shape = {1};
  s.num_classes = 2;
  s.layers = {DenseSpec{2}};
  auto net = init_xavier(s, 0);
  net.params["layer00.weight"].values = {1.0, -2.0};
  net.params["layer00.bias"].values = {0.5, 0.25};
  std::stringstream buf;
  write_parameters(buf, net);
  const std::string b = buf.str();
  auto u32 = [&](std::size_t at) {
    return std::uint32_t(std::uint8_t(b[at])) | std::uint32_t(std::uint8_t(b[at + 1])) << 8 |
           std::uint32_t(std::uint8_t(b[at + 2])) << 16 | std::uint32_t(std::uint8_t(b[at + 3])) << 24;
  };
  ASSERT_EQ(b.substr(0, 4), "DOPT");
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 2u);
  // First record: "layer00.bias", rank 1, dim 2, then two f64.
  EXPECT_EQ(u32(12), 12u);
  EXPECT_EQ(b.substr(16, 12), "layer00.bias");
  EXPECT_EQ(u32(28), 1u);
  EXPECT_EQ(u32(32), 2u);
  double v;
  std::memcpy(&v, b.data() + 36, 8);
  EXPECT_EQ(v, 0.5);
  const std::size_t second = 36 + 16;
  EXPECT_EQ(u32(second), 14u);
  EXPECT_EQ(b.substr(second + 4, 14), "layer00.weight");
  EXPECT_EQ(u32(second + 18), 2u);
  EXPECT_EQ(u32(second + 22), 2u);
  EXPECT_EQ(u32(second + 26), 1u);
  std::memcpy(&v, b.data() + second + 30 + 8, 8);
  EXPECT_EQ(v, -2.0);
  EXPECT_EQ(b.size(), second + 30 + 16);
}

TEST(Serialize, RejectsDamagedFiles) {
  const auto s = mlp(3, {4}, 2);
  const auto net = init_xavier(s, 3);
  std::stringstream buf;
  write_parameters(buf, net);
  const std::string good = buf.str();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::stringstream in1(bad_magic);
  EXPECT_THROW(read_parameters(in1, s), FormatError);

  std::stringstream in2(good.substr(0, good.size() - 3));
  EXPECT_THROW(read_parameters(in2, s), FormatError);

  std::stringstream in3(good);
  EXPECT_THROW(read_parameters(in3, mlp(3, {5}, 2)), ShapeError);
}

TEST(Determinism, GradientsIgnoreHeapLayout) {
  // Vectorised kernels can change summation order with buffer alignment; the
  // same inputs must give the same bits wherever the buffers land.
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto stack = fixture::random_stack(seed);
    auto net = init_xavier(stack.spec, seed);
    net.train_mode = true;
    for (std::size_t batch : {1, 3, 16}) {
      std::vector<double> ref;
      for (int rep = 0; rep < 8; ++rep) {
        std::vector<std::unique_ptr<char[]>> padding;
        for (int j = 0; j < rep * 3; ++j) padding.emplace_back(new char[8 + 8 * ((j * 7 + rep) % 13)]);
        Rng rng(1);
        const auto lg = loss_and_grads(net, fixture::random_batch(stack.spec.input_shape, batch, seed),
                                       fixture::random_labels(batch, 3, seed), stack.alpha, &rng);
        std::vector<double> flat{lg.loss};
        for (const auto& [name, g] : lg.grads) flat.insert(flat.end(), g.values.begin(), g.values.end());
        if (rep == 0) {
          ref = flat;
        } else {
          ASSERT_EQ(flat, ref) << stack.description << " batch " << batch;
        }
      }
    }
  }
}
