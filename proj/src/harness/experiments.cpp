#include "harness/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "bayesopt/bayesopt.hpp"
#include "common/error.hpp"
#include "common/rng.hpp"
#include "drift/drift.hpp"
#include "gp/gp.hpp"
#include "nn/network.hpp"
#include "nn/serialize.hpp"
#include "nn/train.hpp"

namespace bayesft::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string sigma_text(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", s);
  return buf;
}

// Shortest round-trip text, used as a JSON object key.
std::string sigma_key(double s) { return json(s).dump(); }

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void note(const RunContext& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << msg << std::endl;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_json(RunRecord& rec, const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  rec.outputs.push_back(path);
}

void prepare(const RunContext& ctx) {
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec) throw IoError("cannot create " + ctx.out_dir.string() + ": " + ec.message());
}

std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::size_t repeat) { return cfg.seed + repeat; }

nn::Network train_fresh(const nn::NetworkSpec& spec, const data::DatasetSplit& train, const ArchVector& alpha,
                        nn::SgdConfig sgd, std::uint64_t seed) {
  sgd.seed = seed;
  return nn::train(nn::init_xavier(spec, seed), train, alpha.span(), sgd);
}

json stat_json(const std::vector<double>& xs) {
  const auto ms = drift::mean_std(xs);
  return {{"mean", ms.mean}, {"std", ms.std}, {"n", xs.size()}};
}

const char* kCurveHeader =
    "config_hash,variant,repeat,seed,sigma,mean_accuracy,std_accuracy,mean_loss,std_loss,T,clamped_samples";

void write_curve_rows(std::ostream& out, const std::string& hash, const std::string& variant, std::size_t repeat,
                      const std::vector<drift::SweepRow>& rows) {
  for (const auto& r : rows) {
    out << hash << ',' << variant << ',' << repeat << ',' << r.seed << ',' << sigma_text(r.sigma) << ','
        << num(r.mean_accuracy) << ',' << num(r.std_accuracy) << ',' << num(r.mean_loss) << ',' << num(r.std_loss)
        << ',' << r.samples << ',' << r.clamped_samples << '\n';
  }
}

// Per-sigma accuracies collected over repeats.
struct Curve {
  std::vector<std::vector<double>> by_sigma;  // [sigma][repeat]
  std::vector<double> clean;
  std::vector<double> auc;

  explicit Curve(std::size_t n_sigma) : by_sigma(n_sigma) {}

  void add(const std::vector<double>& sigmas, const std::vector<drift::SweepRow>& rows, double clean_acc) {
    std::vector<double> acc;
    for (std::size_t s = 0; s < rows.size(); ++s) {
      by_sigma[s].push_back(rows[s].mean_accuracy);
      acc.push_back(rows[s].mean_accuracy);
    }
    clean.push_back(clean_acc);
    auc.push_back(normalized_auc(sigmas, acc));
  }

  json to_json(const std::vector<double>& sigmas) const {
    json pts = json::array();
    for (std::size_t s = 0; s < sigmas.size(); ++s) {
      const auto ms = drift::mean_std(by_sigma[s]);
      pts.push_back({{"sigma", sigmas[s]}, {"mean_accuracy", ms.mean}, {"std_accuracy", ms.std},
                     {"n", by_sigma[s].size()}});
    }
    return {{"clean_accuracy", stat_json(clean)}, {"auc", stat_json(auc)}, {"by_sigma", pts}};
  }
};

ArchVector fixed_alpha(const nn::NetworkSpec& spec, const std::vector<double>& rates) {
  const std::size_t dim = nn::dropout_slot_count(spec);
  if (rates.empty()) return ArchVector::zeros(dim);
  if (rates.size() != dim) {
    throw ConfigError("model_options.dropout has " + std::to_string(rates.size()) + " rates but the model has " +
                      std::to_string(dim) + " dropout slots");
  }
  return ArchVector(rates);
}

}  // namespace

// ---- building blocks -----------------------------------------------------------------

nn::NetworkSpec build_model(Preset preset, const ModelOptions& opts, const nn::Shape& input_shape,
                            std::size_t num_classes) {
  nn::NetworkSpec spec;
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  auto& L = spec.layers;
  std::size_t slot = 0;
  auto block_tail = [&](bool with_slot) {
    if (opts.normalization) L.push_back(nn::NormalizationSpec{*opts.normalization});
    L.push_back(nn::ActivationSpec{opts.activation});
    if (with_slot) L.push_back(nn::DropoutSlotSpec{slot++});
  };
  if (preset == Preset::mlp3) {
    if (input_shape.size() != 1) L.push_back(nn::FlattenSpec{});
    for (std::size_t w : opts.hidden) {
      L.push_back(nn::DenseSpec{w});
      block_tail(true);
    }
    L.push_back(nn::DenseSpec{num_classes});
  } else {
    L.push_back(nn::Conv2dSpec{8, 5});
    block_tail(false);
    L.push_back(nn::MaxPool2dSpec{2});
    L.push_back(nn::DropoutSlotSpec{slot++});
    L.push_back(nn::Conv2dSpec{16, 5});
    block_tail(false);
    L.push_back(nn::MaxPool2dSpec{2});
    L.push_back(nn::DropoutSlotSpec{slot++});
    L.push_back(nn::FlattenSpec{});
    L.push_back(nn::DenseSpec{64});
    block_tail(true);
    L.push_back(nn::DenseSpec{num_classes});
  }
  nn::validate(spec);
  return spec;
}

data::Splits load_splits(const DatasetRef& ref) {
  data::DatasetSplit all;
  if (ref.kind == DatasetRef::Kind::mnist) {
    all = data::load_mnist_idx(ref.images, ref.labels);
    if (ref.limit > 0 && ref.limit < all.size()) {
      std::vector<std::size_t> head(ref.limit);
      std::iota(head.begin(), head.end(), std::size_t{0});
      all = all.subset(head, "mnist");
    }
    all.name = "mnist";
  } else {
    all = data::make_synthetic(ref.synthetic);
  }
  return data::split(all, ref.fractions, ref.split_seed);
}

std::string data_version(const data::Splits& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* d : {&s.train, &s.valid, &s.test}) h = splitmix64(h ^ data::content_hash(*d));
  return hex64(h);
}

std::vector<Variant> ablation_variants(Task task, const ModelOptions& base) {
  std::vector<Variant> out;
  switch (task) {
    case Task::ablate_dropout:
      for (double r : {0.0, 0.1, 0.3, 0.5}) {
        out.push_back({r == 0.0 ? "none" : json(r).dump(), base, r});
      }
      break;
    case Task::ablate_norm: {
      Variant none{"none", base, 0.0};
      none.model.normalization.reset();
      out.push_back(none);
      for (auto k : {nn::NormKind::batch, nn::NormKind::layer}) {
        Variant v{nn::norm_name(k), base, 0.0};
        v.model.normalization = k;
        out.push_back(v);
      }
      break;
    }
    case Task::ablate_depth:
      for (std::size_t depth : {2, 3, 5, 8}) {
        Variant v{std::to_string(depth), base, 0.0};
        v.model.hidden.assign(depth, 128);
        out.push_back(v);
      }
      break;
    case Task::ablate_activation:
      for (auto a : {nn::Activation::relu, nn::Activation::leaky_relu, nn::Activation::elu, nn::Activation::gelu}) {
        Variant v{nn::activation_name(a), base, 0.0};
        v.model.activation = a;
        out.push_back(v);
      }
      break;
    default:
      throw ConfigError("task '" + task_name(task) + "' is not an ablation");
  }
  return out;
}

double normalized_auc(const std::vector<double>& sigmas, const std::vector<double>& accuracy) {
  if (sigmas.size() != accuracy.size() || sigmas.empty()) throw ShapeError("auc needs matching non-empty inputs");
  if (sigmas.size() == 1) return accuracy[0];
  double area = 0.0;
  for (std::size_t i = 1; i < sigmas.size(); ++i) {
    area += 0.5 * (accuracy[i] + accuracy[i - 1]) * (sigmas[i] - sigmas[i - 1]);
  }
  const double span = sigmas.back() - sigmas.front();
  return span == 0.0 ? accuracy[0] : area / span;
}

double pooled_std(double std_a, double std_b) { return std::sqrt(0.5 * (std_a * std_a + std_b * std_b)); }

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("spearman needs equal-length inputs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---- commands ------------------------------------------------------------------------

RunRecord cmd_ablate(const ExperimentConfig& cfg, const RunContext& ctx) {
  const auto variants = ablation_variants(cfg.task, cfg.model);
  const auto splits = load_splits(cfg.dataset);
  prepare(ctx);
  RunRecord rec{config_hash(cfg), data_version(splits), {}, {}};
  const std::string stem = task_name(cfg.task);

  auto csv = open_out(ctx.out_dir / (stem + ".csv"));
  csv << kCurveHeader << '\n';
  json vjson = json::array();
  for (const auto& v : variants) {
    const auto spec = build_model(cfg.preset, v.model, splits.train.sample_shape(), splits.train.num_classes);
    const ArchVector alpha(std::vector<double>(nn::dropout_slot_count(spec), v.dropout));
    Curve curve(cfg.sigmas.size());
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      Stopwatch clock;
      const std::uint64_t seed = repeat_seed(cfg, r);
      const auto net = train_fresh(spec, splits.train, alpha, cfg.sgd, seed);
      const double clean = nn::evaluate_accuracy(net, splits.test);
      const auto rows =
          drift::drift_accuracy_sweep(net, alpha, splits.test, cfg.sigmas, cfg.samples, seed, cfg.perturb_set);
      write_curve_rows(csv, rec.config_hash, v.name, r, rows);
      curve.add(cfg.sigmas, rows, clean);
      note(ctx, stem + " variant " + v.name + " repeat " + std::to_string(r) + ": clean " + num(clean) + ", " +
                    num(clock.seconds()) + " s");
    }
    json entry = curve.to_json(cfg.sigmas);
    entry["variant"] = v.name;
    vjson.push_back(entry);
  }
  csv.close();
  rec.outputs.push_back(ctx.out_dir / (stem + ".csv"));
  rec.summary = {{"config_hash", rec.config_hash}, {"data_version", rec.data_version}, {"task", stem},
                 {"repeats", cfg.repeats},         {"samples", cfg.samples},          {"variants", vjson}};
  write_json(rec, ctx.out_dir / (stem + "_summary.json"), rec.summary);
  return rec;
}

RunRecord cmd_sweep(const ExperimentConfig& cfg, const RunContext& ctx) {
  const auto splits = load_splits(cfg.dataset);
  const auto spec = build_model(cfg.preset, cfg.model, splits.train.sample_shape(), splits.train.num_classes);
  const ArchVector alpha = fixed_alpha(spec, cfg.model.dropout);
  prepare(ctx);
  RunRecord rec{config_hash(cfg), data_version(splits), {}, {}};

  std::vector<drift::SweepRow> all_rows;
  Curve curve(cfg.sigmas.size());
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    Stopwatch clock;
    const std::uint64_t seed = repeat_seed(cfg, r);
    const auto net = train_fresh(spec, splits.train, alpha, cfg.sgd, seed);
    const auto rows =
        drift::drift_accuracy_sweep(net, alpha, splits.test, cfg.sigmas, cfg.samples, seed, cfg.perturb_set);
    curve.add(cfg.sigmas, rows, nn::evaluate_accuracy(net, splits.test));
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    if (r == 0) {
      nn::save_parameters(ctx.out_dir / "params.dopt", net);
      rec.outputs.push_back(ctx.out_dir / "params.dopt");
    }
    note(ctx, "sweep repeat " + std::to_string(r) + ": " + num(clock.seconds()) + " s");
  }
  {
    auto out = open_out(ctx.out_dir / "sweep.csv");
    drift::write_sweep_csv(out, all_rows);
  }
  rec.outputs.push_back(ctx.out_dir / "sweep.csv");
  write_json(rec, ctx.out_dir / "network.json", nn::to_json(spec));
  rec.summary = curve.to_json(cfg.sigmas);
  rec.summary["config_hash"] = rec.config_hash;
  rec.summary["data_version"] = rec.data_version;
  rec.summary["alpha"] = alpha.rates;
  write_json(rec, ctx.out_dir / "sweep_summary.json", rec.summary);
  return rec;
}

RunRecord cmd_boundary_demo(const ExperimentConfig& cfg, const RunContext& ctx) {
  if (cfg.dataset.kind != DatasetRef::Kind::two_moons) throw ConfigError("boundary needs a 2-D synthetic dataset");
  const data::DatasetSplit all = data::make_synthetic(cfg.dataset.synthetic);
  if (all.sample_size() != 2) throw ConfigError("boundary needs a 2-D dataset");
  const auto splits = data::split(all, cfg.dataset.fractions, cfg.dataset.split_seed);
  prepare(ctx);
  RunRecord rec{config_hash(cfg), data_version(splits), {}, {}};

  ModelOptions opts = cfg.model;
  opts.hidden = cfg.boundary.hidden;
  opts.normalization.reset();
  const auto spec = build_model(Preset::mlp3, opts, {2}, all.num_classes);
  const ArchVector alpha = ArchVector::zeros(nn::dropout_slot_count(spec));
  const auto net = train_fresh(spec, splits.train, alpha, cfg.boundary.sgd, cfg.seed);
  const double clean_acc = nn::evaluate_accuracy(net, splits.test);

  double lo[2] = {INFINITY, INFINITY}, hi[2] = {-INFINITY, -INFINITY};
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (int c = 0; c < 2; ++c) {
      lo[c] = std::min(lo[c], all.inputs.values[2 * i + c]);
      hi[c] = std::max(hi[c], all.inputs.values[2 * i + c]);
    }
  }
  const std::size_t g = cfg.boundary.grid_size;
  nn::Tensor grid({g * g, 2});
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const double t1 = static_cast<double>(i) / static_cast<double>(g - 1);
      const double t2 = static_cast<double>(j) / static_cast<double>(g - 1);
      grid.values[2 * (i * g + j)] = (lo[0] - cfg.boundary.margin) + t1 * (hi[0] - lo[0] + 2 * cfg.boundary.margin);
      grid.values[2 * (i * g + j) + 1] =
          (lo[1] - cfg.boundary.margin) + t2 * (hi[1] - lo[1] + 2 * cfg.boundary.margin);
    }
  }
  const auto clean_pred = nn::predict(net, grid);

  data::write_csv_2d(ctx.out_dir / "dataset.csv", all);
  rec.outputs.push_back(ctx.out_dir / "dataset.csv");
  auto grid_csv = open_out(ctx.out_dir / "boundary.csv");
  grid_csv << "sigma,x1,x2,pred\n";
  auto stats_csv = open_out(ctx.out_dir / "boundary_stats.csv");
  stats_csv << "sigma,draw,flip_fraction,accuracy\n";

  std::vector<double> all_sigma, all_flip, all_acc;
  json by_sigma = json::array();
  for (double sigma : cfg.sigmas) {
    const drift::DriftConfig dc{sigma, 1, cfg.seed, cfg.perturb_set};
    std::vector<double> flips, accs;
    for (std::size_t d = 1; d <= cfg.boundary.draws; ++d) {
      const auto drifted = drift::sample_drift(net, dc, d);
      const auto pred = nn::predict(drifted, grid);
      std::size_t flipped = 0;
      for (std::size_t k = 0; k < pred.size(); ++k) flipped += pred[k] != clean_pred[k];
      const double flip = static_cast<double>(flipped) / static_cast<double>(pred.size());
      const double acc = nn::evaluate_accuracy(drifted, splits.test);
      stats_csv << sigma_text(sigma) << ',' << d << ',' << num(flip) << ',' << num(acc) << '\n';
      if (d == 1) {
        for (std::size_t k = 0; k < pred.size(); ++k) {
          grid_csv << sigma_text(sigma) << ',' << num(grid.values[2 * k]) << ',' << num(grid.values[2 * k + 1]) << ','
                   << pred[k] << '\n';
        }
      }
      flips.push_back(flip);
      accs.push_back(acc);
      all_sigma.push_back(sigma);
      all_flip.push_back(flip);
      all_acc.push_back(acc);
    }
    by_sigma.push_back({{"sigma", sigma}, {"flip_fraction", stat_json(flips)}, {"accuracy", stat_json(accs)}});
  }
  grid_csv.close();
  stats_csv.close();
  rec.outputs.push_back(ctx.out_dir / "boundary.csv");
  rec.outputs.push_back(ctx.out_dir / "boundary_stats.csv");
  rec.summary = {{"config_hash", rec.config_hash},
                 {"data_version", rec.data_version},
                 {"clean_test_accuracy", clean_acc},
                 {"by_sigma", by_sigma},
                 {"spearman_sigma_flip", spearman(all_sigma, all_flip)},
                 {"spearman_sigma_accuracy", spearman(all_sigma, all_acc)}};
  write_json(rec, ctx.out_dir / "boundary_summary.json", rec.summary);
  return rec;
}

namespace {

bo::BayesFtConfig bayesft_config(const ExperimentConfig& cfg, const nn::NetworkSpec& spec, std::uint64_t seed) {
  bo::BayesFtConfig b;
  b.spec = spec;
  b.sgd = cfg.sgd;
  b.sgd.seed = seed;
  b.drift = {cfg.bayesopt.sigma, cfg.bayesopt.samples, seed, cfg.perturb_set};
  b.search = cfg.bayesopt.search;
  b.search.seed = seed;
  b.regime = cfg.bayesopt.regime;
  return b;
}

void write_trials(std::ostream& out, const bo::BayesFtResult& res, const bo::BayesFtConfig& b) {
  for (const auto& t : res.per_trial_log) {
    gp::write_trial_jsonl(out, {t.trial, t.alpha, t.value, b.drift.sigma, b.drift.samples, b.drift.seed});
  }
}

void log_trials(const RunContext& ctx, const std::string& tag, const bo::BayesFtResult& res) {
  for (const auto& t : res.per_trial_log) {
    note(ctx, tag + " trial " + std::to_string(t.trial) + " (" + t.regime + "): u = " + num(t.value) + ", " +
                  num(t.wall_seconds) + " s" + (t.diverged ? ", diverged" : ""));
  }
}

RunRecord run_search_command(const ExperimentConfig& cfg, const RunContext& ctx, bo::Proposer proposer) {
  const auto splits = load_splits(cfg.dataset);
  const auto spec = build_model(cfg.preset, cfg.model, splits.train.sample_shape(), splits.train.num_classes);
  const auto b = bayesft_config(cfg, spec, cfg.seed);
  prepare(ctx);
  RunRecord rec{config_hash(cfg), data_version(splits), {}, {}};

  const auto res = proposer == bo::Proposer::bayesian ? bo::run_bayesft(splits, b) : bo::run_random_search(splits, b);
  const std::string tag = proposer == bo::Proposer::bayesian ? "optimize" : "random-search";
  log_trials(ctx, tag, res);
  {
    auto out = open_out(ctx.out_dir / "trials.jsonl");
    write_trials(out, res, b);
  }
  rec.outputs.push_back(ctx.out_dir / "trials.jsonl");

  const auto rows = drift::drift_accuracy_sweep(res.best_network, res.best_alpha, splits.test, cfg.sigmas,
                                                cfg.samples, cfg.seed, cfg.perturb_set);
  {
    auto out = open_out(ctx.out_dir / "sweep.csv");
    drift::write_sweep_csv(out, rows);
  }
  rec.outputs.push_back(ctx.out_dir / "sweep.csv");
  nn::save_parameters(ctx.out_dir / "best_params.dopt", res.best_network);
  rec.outputs.push_back(ctx.out_dir / "best_params.dopt");
  write_json(rec, ctx.out_dir / "network.json", nn::to_json(spec));

  nlohmann::ordered_json summary;
  summary["best_alpha"] = res.best_alpha.rates;
  summary["best_value"] = res.best_value;
  summary["clean_test_acc"] = res.clean_test_accuracy;
  nlohmann::ordered_json by_sigma = nlohmann::ordered_json::object();
  for (const auto& r : rows) by_sigma[sigma_key(r.sigma)] = r.mean_accuracy;
  summary["drift_test_acc_by_sigma"] = by_sigma;
  {
    auto out = open_out(ctx.out_dir / "summary.json");
    out << summary.dump(2) << '\n';
  }
  rec.outputs.push_back(ctx.out_dir / "summary.json");
  rec.summary = json::parse(summary.dump());

  json run = {{"config_hash", rec.config_hash},
              {"data_version", rec.data_version},
              {"command", tag},
              {"regime", bo::regime_name(cfg.bayesopt.regime)},
              {"trials", res.per_trial_log.size()},
              {"best_trial", res.best_trial}};
  write_json(rec, ctx.out_dir / "run.json", run);
  return rec;
}

}  // namespace

RunRecord cmd_optimize(const ExperimentConfig& cfg, const RunContext& ctx) {
  return run_search_command(cfg, ctx, bo::Proposer::bayesian);
}

RunRecord cmd_random_search(const ExperimentConfig& cfg, const RunContext& ctx) {
  return run_search_command(cfg, ctx, bo::Proposer::random);
}

RunRecord cmd_compare(const ExperimentConfig& cfg, const RunContext& ctx) {
  const auto splits = load_splits(cfg.dataset);
  const auto spec = build_model(cfg.preset, cfg.model, splits.train.sample_shape(), splits.train.num_classes);
  prepare(ctx);
  RunRecord rec{config_hash(cfg), data_version(splits), {}, {}};

  auto csv = open_out(ctx.out_dir / "compare_curves.csv");
  csv << kCurveHeader << '\n';
  Curve erm(cfg.sigmas.size()), bft(cfg.sigmas.size());
  json repeats = json::array();
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = repeat_seed(cfg, r);
    Stopwatch clock;
    const ArchVector zero = ArchVector::zeros(nn::dropout_slot_count(spec));
    const auto erm_net = train_fresh(spec, splits.train, zero, cfg.sgd, seed);
    const auto erm_rows =
        drift::drift_accuracy_sweep(erm_net, zero, splits.test, cfg.sigmas, cfg.samples, seed, cfg.perturb_set);
    erm.add(cfg.sigmas, erm_rows, nn::evaluate_accuracy(erm_net, splits.test));
    write_curve_rows(csv, rec.config_hash, "erm", r, erm_rows);
    note(ctx, "compare repeat " + std::to_string(r) + " erm: " + num(clock.seconds()) + " s");

    const auto b = bayesft_config(cfg, spec, seed);
    const auto res = bo::run_bayesft(splits, b);
    log_trials(ctx, "compare repeat " + std::to_string(r), res);
    const auto bft_rows = drift::drift_accuracy_sweep(res.best_network, res.best_alpha, splits.test, cfg.sigmas,
                                                      cfg.samples, seed, cfg.perturb_set);
    bft.add(cfg.sigmas, bft_rows, res.clean_test_accuracy);
    write_curve_rows(csv, rec.config_hash, "bayesft", r, bft_rows);
    {
      const auto path = ctx.out_dir / ("trials_r" + std::to_string(r) + ".jsonl");
      auto out = open_out(path);
      write_trials(out, res, b);
      rec.outputs.push_back(path);
    }
    repeats.push_back({{"repeat", r},
                       {"seed", seed},
                       {"best_alpha", res.best_alpha.rates},
                       {"best_value", res.best_value},
                       {"trials", res.per_trial_log.size()}});
    note(ctx, "compare repeat " + std::to_string(r) + " done: " + num(clock.seconds()) + " s");
  }
  csv.close();
  rec.outputs.push_back(ctx.out_dir / "compare_curves.csv");

  auto gap_csv = open_out(ctx.out_dir / "compare_gap.csv");
  gap_csv << "sigma,erm_mean,erm_std,bayesft_mean,bayesft_std,gap,pooled_std,repeats\n";
  json gaps = json::array();
  for (std::size_t s = 0; s < cfg.sigmas.size(); ++s) {
    const auto e = drift::mean_std(erm.by_sigma[s]);
    const auto f = drift::mean_std(bft.by_sigma[s]);
    const double gap = f.mean - e.mean;
    const double ps = pooled_std(e.std, f.std);
    gap_csv << sigma_text(cfg.sigmas[s]) << ',' << num(e.mean) << ',' << num(e.std) << ',' << num(f.mean) << ','
            << num(f.std) << ',' << num(gap) << ',' << num(ps) << ',' << cfg.repeats << '\n';
    gaps.push_back({{"sigma", cfg.sigmas[s]}, {"gap", gap}, {"pooled_std", ps}});
  }
  gap_csv.close();
  rec.outputs.push_back(ctx.out_dir / "compare_gap.csv");

  rec.summary = {{"config_hash", rec.config_hash}, {"data_version", rec.data_version},
                 {"erm", erm.to_json(cfg.sigmas)}, {"bayesft", bft.to_json(cfg.sigmas)},
                 {"gap", gaps},                    {"repeats", repeats}};
  write_json(rec, ctx.out_dir / "compare_summary.json", rec.summary);
  return rec;
}

RunRecord run_experiment(const ExperimentConfig& cfg, const RunContext& ctx) {
  switch (cfg.task) {
    case Task::ablate_dropout:
    case Task::ablate_norm:
    case Task::ablate_depth:
    case Task::ablate_activation:
      return cmd_ablate(cfg, ctx);
    case Task::boundary_demo:
      return cmd_boundary_demo(cfg, ctx);
    case Task::sweep:
      return cmd_sweep(cfg, ctx);
    case Task::optimize:
      return cmd_optimize(cfg, ctx);
    case Task::random_search:
      return cmd_random_search(cfg, ctx);
    case Task::compare:
      return cmd_compare(cfg, ctx);
  }
  throw ConfigError("unhandled task");
}

}  // namespace bayesft::harness
