#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bayesopt/bayesopt.hpp"
#include "data/dataset.hpp"
#include "drift/drift.hpp"
#include "nn/network_spec.hpp"
#include "nn/train.hpp"

namespace bayesft::harness {

enum class Task {
  ablate_dropout,
  ablate_norm,
  ablate_depth,
  ablate_activation,
  boundary_demo,
  sweep,
  optimize,
  compare,
  random_search,
};

std::string task_name(Task t);
Task parse_task(const std::string& name);

enum class Preset { mlp3, lenet_small };

std::string preset_name(Preset p);
Preset parse_preset(const std::string& name);

struct DatasetRef {
  enum class Kind { mnist, two_moons } kind = Kind::mnist;
  std::string images;  // mnist
  std::string labels;
  std::size_t limit = 0;  // leading records kept; 0 keeps all
  data::SyntheticSpec synthetic;
  std::array<double, 3> fractions{0.7, 0.1, 0.2};
  std::uint64_t split_seed = 0;
};

struct ModelOptions {
  nn::Activation activation = nn::Activation::relu;
  std::optional<nn::NormKind> normalization;
  std::vector<std::size_t> hidden{256, 128};  // mlp3 hidden widths
  std::vector<double> dropout;                 // fixed rates for sweep; empty = zeros
};

struct BayesOptOptions {
  bo::SearchConfig search;
  double sigma = 0.6;
  std::size_t samples = 20;
  bo::ThetaRegime regime = bo::ThetaRegime::retrain;
};

struct BoundaryOptions {
  std::size_t grid_size = 200;
  double margin = 0.5;
  std::size_t draws = 10;
  std::vector<std::size_t> hidden{32, 32};
  nn::SgdConfig sgd{0.1, 32, 100, 0};
};

struct ExperimentConfig {
  Task task = Task::sweep;
  Preset preset = Preset::mlp3;
  ModelOptions model;
  DatasetRef dataset;
  std::vector<double> sigmas{0.0, 0.3, 0.6, 0.9, 1.2, 1.5};
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::size_t samples = 20;  // drift draws per sweep point
  drift::PerturbSet perturb_set = drift::PerturbSet::all_trainable;
  nn::SgdConfig sgd;
  BayesOptOptions bayesopt;
  BoundaryOptions boundary;
};

inline constexpr double kMaxSigma = 1.5;

// Parses and validates a config document for `task`. A "task" key in the
// document must agree with it (for ablate, it selects the factor). Throws
// ConfigError on any unknown key, wrong type or out-of-range value.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& command);

// Subcommand name -> the task family it runs.
bool command_accepts(const std::string& command, Task t);

void validate(const ExperimentConfig& cfg);

// Fully resolved config with every default written out; keys sorted.
nlohmann::json to_json(const ExperimentConfig& cfg);

// 16 hex digits of a 64-bit FNV-1a over the canonical JSON dump.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace bayesft::harness
