#include "harness/config.hpp"

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <set>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace bayesft::harness {

using nlohmann::json;

namespace {

constexpr std::pair<Task, const char*> kTaskNames[] = {
    {Task::ablate_dropout, "ablate_dropout"},
    {Task::ablate_norm, "ablate_norm"},
    {Task::ablate_depth, "ablate_depth"},
    {Task::ablate_activation, "ablate_activation"},
    {Task::boundary_demo, "boundary_demo"},
    {Task::sweep, "sweep"},
    {Task::optimize, "optimize"},
    {Task::compare, "compare"},
    {Task::random_search, "random_search"},
};

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

void read_count(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + " must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

void read_seed(const json& obj, const char* key, std::uint64_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(where + "." + key + " must be a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

void read_sgd(const json& obj, nn::SgdConfig& sgd, const std::string& where) {
  allow_keys(obj, where, {"learning_rate", "batch_size", "epochs"});
  read(obj, "learning_rate", sgd.learning_rate, where);
  read_count(obj, "batch_size", sgd.batch_size, where);
  read_count(obj, "epochs", sgd.epochs, where);
}

json sgd_json(const nn::SgdConfig& sgd) {
  return {{"learning_rate", sgd.learning_rate}, {"batch_size", sgd.batch_size}, {"epochs", sgd.epochs}};
}

template <class F>
auto translate(F&& f, const std::string& what) {
  try {
    return f();
  } catch (const Error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

void parse_dataset(const json& obj, DatasetRef& ds) {
  const std::string where = "dataset";
  if (!obj.is_object()) throw ConfigError("dataset must be a JSON object");
  std::string kind = "mnist";
  read(obj, "kind", kind, where);
  if (kind == "mnist") {
    allow_keys(obj, where, {"kind", "images", "labels", "limit", "split", "split_seed"});
    ds.kind = DatasetRef::Kind::mnist;
    read(obj, "images", ds.images, where);
    read(obj, "labels", ds.labels, where);
    read_count(obj, "limit", ds.limit, where);
  } else if (kind == "two_moons" || kind == "gaussian_blobs") {
    allow_keys(obj, where,
               {"kind", "n_samples", "noise_std", "centers", "spread", "seed", "split", "split_seed"});
    ds.kind = DatasetRef::Kind::two_moons;
    ds.synthetic.kind = kind == "two_moons" ? data::SyntheticKind::two_moons : data::SyntheticKind::gaussian_blobs;
    read_count(obj, "n_samples", ds.synthetic.n_samples, where);
    read(obj, "noise_std", ds.synthetic.noise_std, where);
    read(obj, "centers", ds.synthetic.centers, where);
    read(obj, "spread", ds.synthetic.spread, where);
    read_seed(obj, "seed", ds.synthetic.seed, where);
  } else {
    throw ConfigError("unknown dataset kind '" + kind + "'");
  }
  read(obj, "split", ds.fractions, where);
  read_seed(obj, "split_seed", ds.split_seed, where);
}

}  // namespace

std::string task_name(Task t) {
  for (const auto& [task, name] : kTaskNames) {
    if (task == t) return name;
  }
  return "?";
}

Task parse_task(const std::string& name) {
  for (const auto& [task, n] : kTaskNames) {
    if (name == n) return task;
  }
  throw ConfigError("unknown task '" + name + "'");
}

std::string preset_name(Preset p) { return p == Preset::mlp3 ? "mlp3" : "lenet_small"; }

Preset parse_preset(const std::string& name) {
  if (name == "mlp3") return Preset::mlp3;
  if (name == "lenet_small") return Preset::lenet_small;
  throw ConfigError("unknown model preset '" + name + "'");
}

bool command_accepts(const std::string& command, Task t) {
  switch (t) {
    case Task::ablate_dropout:
    case Task::ablate_norm:
    case Task::ablate_depth:
    case Task::ablate_activation:
      return command == "ablate";
    case Task::boundary_demo:
      return command == "boundary";
    case Task::sweep:
      return command == "sweep";
    case Task::optimize:
      return command == "optimize";
    case Task::compare:
      return command == "compare";
    case Task::random_search:
      return command == "random-search";
  }
  return false;
}

ExperimentConfig parse_config(const json& doc, const std::string& command) {
  allow_keys(doc, "config",
             {"task", "model", "model_options", "dataset", "sigmas", "repeats", "seed", "samples", "perturb_set",
              "sgd", "bayesopt", "boundary"});
  ExperimentConfig cfg;

  if (doc.contains("task")) {
    std::string name;
    read(doc, "task", name, "config");
    cfg.task = parse_task(name);
  } else if (command == "ablate") {
    throw ConfigError("ablate needs \"task\": one of ablate_dropout, ablate_norm, ablate_depth, ablate_activation");
  } else if (command == "boundary") {
    cfg.task = Task::boundary_demo;
  } else if (command == "random-search") {
    cfg.task = Task::random_search;
  } else {
    cfg.task = translate([&] { return parse_task(command); }, "command");
  }
  if (!command_accepts(command, cfg.task)) {
    throw ConfigError("task '" + task_name(cfg.task) + "' cannot run under command '" + command + "'");
  }

  if (cfg.task == Task::boundary_demo) {
    cfg.dataset.kind = DatasetRef::Kind::two_moons;
    cfg.sigmas = {0.0, 0.3, 0.6, 1.0};
  }

  if (doc.contains("model")) {
    std::string name;
    read(doc, "model", name, "config");
    cfg.preset = parse_preset(name);
  }
  if (doc.contains("model_options")) {
    const json& m = doc.at("model_options");
    allow_keys(m, "model_options", {"activation", "normalization", "hidden", "dropout"});
    std::string act = nn::activation_name(cfg.model.activation);
    read(m, "activation", act, "model_options");
    cfg.model.activation = translate([&] { return nn::parse_activation(act); }, "model_options.activation");
    std::string norm = "none";
    read(m, "normalization", norm, "model_options");
    if (norm == "none") {
      cfg.model.normalization.reset();
    } else {
      cfg.model.normalization = translate([&] { return nn::parse_norm(norm); }, "model_options.normalization");
    }
    read(m, "hidden", cfg.model.hidden, "model_options");
    read(m, "dropout", cfg.model.dropout, "model_options");
  }
  if (doc.contains("dataset")) parse_dataset(doc.at("dataset"), cfg.dataset);
  read(doc, "sigmas", cfg.sigmas, "config");
  read_count(doc, "repeats", cfg.repeats, "config");
  read_seed(doc, "seed", cfg.seed, "config");
  read_count(doc, "samples", cfg.samples, "config");
  if (doc.contains("perturb_set")) {
    std::string ps;
    read(doc, "perturb_set", ps, "config");
    if (ps == "all_trainable") {
      cfg.perturb_set = drift::PerturbSet::all_trainable;
    } else if (ps == "weights_only") {
      cfg.perturb_set = drift::PerturbSet::weights_only;
    } else {
      throw ConfigError("unknown perturb_set '" + ps + "'");
    }
  }
  if (doc.contains("sgd")) read_sgd(doc.at("sgd"), cfg.sgd, "sgd");

  if (doc.contains("bayesopt")) {
    const json& b = doc.at("bayesopt");
    const std::string where = "bayesopt";
    allow_keys(b, where,
               {"max_trials", "sigma", "samples", "acquisition", "beta", "candidate_pool_size", "patience", "r_max",
                "regime", "refit_every"});
    auto& s = cfg.bayesopt.search;
    read_count(b, "max_trials", s.max_trials, where);
    read(b, "sigma", cfg.bayesopt.sigma, where);
    read_count(b, "samples", cfg.bayesopt.samples, where);
    if (b.contains("acquisition")) {
      std::string a;
      read(b, "acquisition", a, where);
      if (a == "ucb") {
        s.acquisition.kind = bo::AcquisitionKind::ucb;
      } else if (a == "posterior_mean") {
        s.acquisition.kind = bo::AcquisitionKind::posterior_mean;
      } else {
        throw ConfigError("unknown acquisition '" + a + "'");
      }
    }
    read(b, "beta", s.acquisition.beta, where);
    read_count(b, "candidate_pool_size", s.candidate_pool_size, where);
    read_count(b, "patience", s.patience, where);
    read(b, "r_max", s.r_max, where);
    read_count(b, "refit_every", s.refit_every, where);
    if (b.contains("regime")) {
      std::string r;
      read(b, "regime", r, where);
      if (r == "retrain") {
        cfg.bayesopt.regime = bo::ThetaRegime::retrain;
      } else if (r == "warm_start") {
        cfg.bayesopt.regime = bo::ThetaRegime::warm_start;
      } else {
        throw ConfigError("unknown regime '" + r + "'");
      }
    }
  }
  if (doc.contains("boundary")) {
    const json& b = doc.at("boundary");
    const std::string where = "boundary";
    allow_keys(b, where, {"grid_size", "margin", "draws", "hidden", "sgd"});
    read_count(b, "grid_size", cfg.boundary.grid_size, where);
    read(b, "margin", cfg.boundary.margin, where);
    read_count(b, "draws", cfg.boundary.draws, where);
    read(b, "hidden", cfg.boundary.hidden, where);
    if (b.contains("sgd")) read_sgd(b.at("sgd"), cfg.boundary.sgd, "boundary.sgd");
  }
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.sigmas.empty()) throw ConfigError("sigmas must not be empty");
  for (double s : cfg.sigmas) {
    if (!(s >= 0.0 && s <= kMaxSigma)) throw ConfigError("sigma values must lie in [0, 1.5]");
  }
  if (cfg.repeats < 1) throw ConfigError("repeats must be at least 1");
  if (cfg.samples < 1) throw ConfigError("samples must be at least 1");
  translate([&] { nn::check_sgd(cfg.sgd); return 0; }, "sgd");

  const auto& ds = cfg.dataset;
  double total = 0.0;
  for (double f : ds.fractions) {
    if (!(f > 0.0)) throw ConfigError("dataset.split fractions must all be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("dataset.split fractions must sum to 1");
  if (ds.kind == DatasetRef::Kind::mnist) {
    if (ds.images.empty() || ds.labels.empty()) throw ConfigError("dataset.images and dataset.labels are required");
  } else {
    const auto& s = ds.synthetic;
    if (s.n_samples == 0 || s.n_samples % 2 != 0) throw ConfigError("dataset.n_samples must be positive and even");
    if (!(s.noise_std >= 0.0)) throw ConfigError("dataset.noise_std must be non-negative");
  }

  const bool image_task = cfg.task != Task::boundary_demo;
  if (cfg.task == Task::boundary_demo && ds.kind != DatasetRef::Kind::two_moons) {
    throw ConfigError("boundary needs a 2-D synthetic dataset");
  }
  if (cfg.preset == Preset::lenet_small && image_task && ds.kind != DatasetRef::Kind::mnist) {
    throw ConfigError("lenet_small needs an image dataset");
  }
  if (cfg.task == Task::ablate_depth && cfg.preset != Preset::mlp3) {
    throw ConfigError("ablate_depth is defined for the mlp3 preset only");
  }
  if (cfg.model.hidden.empty()) throw ConfigError("model_options.hidden needs at least one layer");
  for (std::size_t w : cfg.model.hidden) {
    if (w == 0) throw ConfigError("model_options.hidden widths must be positive");
  }
  for (double r : cfg.model.dropout) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("model_options.dropout rates must lie in [0, 1)");
  }

  const auto& b = cfg.bayesopt;
  translate([&] { bo::check(b.search); return 0; }, "bayesopt");
  if (!(b.sigma >= 0.0 && b.sigma <= kMaxSigma)) throw ConfigError("bayesopt.sigma must lie in [0, 1.5]");
  if (b.samples < 1) throw ConfigError("bayesopt.samples must be at least 1");

  const auto& g = cfg.boundary;
  if (g.grid_size < 2) throw ConfigError("boundary.grid_size must be at least 2");
  if (!(g.margin >= 0.0)) throw ConfigError("boundary.margin must be non-negative");
  if (g.draws < 1) throw ConfigError("boundary.draws must be at least 1");
  if (g.hidden.empty()) throw ConfigError("boundary.hidden needs at least one layer");
  translate([&] { nn::check_sgd(g.sgd); return 0; }, "boundary.sgd");
}

json to_json(const ExperimentConfig& cfg) {
  json ds;
  ds["split"] = cfg.dataset.fractions;
  ds["split_seed"] = cfg.dataset.split_seed;
  if (cfg.dataset.kind == DatasetRef::Kind::mnist) {
    ds["kind"] = "mnist";
    ds["images"] = cfg.dataset.images;
    ds["labels"] = cfg.dataset.labels;
    ds["limit"] = cfg.dataset.limit;
  } else {
    const auto& s = cfg.dataset.synthetic;
    ds["n_samples"] = s.n_samples;
    ds["seed"] = s.seed;
    if (s.kind == data::SyntheticKind::two_moons) {
      ds["kind"] = "two_moons";
      ds["noise_std"] = s.noise_std;
    } else {
      ds["kind"] = "gaussian_blobs";
      ds["centers"] = s.centers;
      ds["spread"] = s.spread;
    }
  }
  const auto& b = cfg.bayesopt;
  return {
      {"task", task_name(cfg.task)},
      {"model", preset_name(cfg.preset)},
      {"model_options",
       {{"activation", nn::activation_name(cfg.model.activation)},
        {"normalization", cfg.model.normalization ? nn::norm_name(*cfg.model.normalization) : "none"},
        {"hidden", cfg.model.hidden},
        {"dropout", cfg.model.dropout}}},
      {"dataset", ds},
      {"sigmas", cfg.sigmas},
      {"repeats", cfg.repeats},
      {"seed", cfg.seed},
      {"samples", cfg.samples},
      {"perturb_set", cfg.perturb_set == drift::PerturbSet::all_trainable ? "all_trainable" : "weights_only"},
      {"sgd", sgd_json(cfg.sgd)},
      {"bayesopt",
       {{"max_trials", b.search.max_trials},
        {"sigma", b.sigma},
        {"samples", b.samples},
        {"acquisition", b.search.acquisition.kind == bo::AcquisitionKind::ucb ? "ucb" : "posterior_mean"},
        {"beta", b.search.acquisition.beta},
        {"candidate_pool_size", b.search.candidate_pool_size},
        {"patience", b.search.patience},
        {"r_max", b.search.r_max},
        {"refit_every", b.search.refit_every},
        {"regime", bo::regime_name(b.regime)}}},
      {"boundary",
       {{"grid_size", cfg.boundary.grid_size},
        {"margin", cfg.boundary.margin},
        {"draws", cfg.boundary.draws},
        {"hidden", cfg.boundary.hidden},
        {"sgd", sgd_json(cfg.boundary.sgd)}}},
  };
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(cfg).dump())));
  return buf;
}

}  // namespace bayesft::harness
