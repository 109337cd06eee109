#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data/dataset.hpp"
#include "harness/config.hpp"
#include "nn/network_spec.hpp"

namespace bayesft::harness {

struct RunContext {
  std::filesystem::path out_dir = ".";
  std::ostream* log = nullptr;  // progress and wall-times; never part of the outputs
};

struct RunRecord {
  std::string config_hash;
  std::string data_version;  // content hash of the train/valid/test splits
  std::vector<std::filesystem::path> outputs;
  nlohmann::json summary;
};

// mlp3: [flatten] (dense(w) [norm] act slot_i)* dense(classes) over `hidden`.
// lenet_small: conv(8,5) [norm] act pool slot0 conv(16,5) [norm] act pool slot1
//              flatten dense(64) [norm] act slot2 dense(classes).
nn::NetworkSpec build_model(Preset preset, const ModelOptions& opts, const nn::Shape& input_shape,
                            std::size_t num_classes);

data::Splits load_splits(const DatasetRef& ref);

std::string data_version(const data::Splits& s);

struct Variant {
  std::string name;
  ModelOptions model;
  double dropout = 0.0;  // applied to every slot
};

// The fixed variant set of an ablate_* task, derived from `base`.
std::vector<Variant> ablation_variants(Task task, const ModelOptions& base);

// Trapezoid area under accuracy-vs-sigma divided by the sigma span (the mean
// accuracy for a single sigma).
double normalized_auc(const std::vector<double>& sigmas, const std::vector<double>& accuracy);

// sqrt((s_a^2 + s_b^2) / 2).
double pooled_std(double std_a, double std_b);

// Spearman rank correlation with average ranks for ties; 0 if either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

RunRecord cmd_ablate(const ExperimentConfig& cfg, const RunContext& ctx);
RunRecord cmd_boundary_demo(const ExperimentConfig& cfg, const RunContext& ctx);
RunRecord cmd_sweep(const ExperimentConfig& cfg, const RunContext& ctx);
RunRecord cmd_optimize(const ExperimentConfig& cfg, const RunContext& ctx);
RunRecord cmd_random_search(const ExperimentConfig& cfg, const RunContext& ctx);
RunRecord cmd_compare(const ExperimentConfig& cfg, const RunContext& ctx);

// Dispatches on cfg.task.
RunRecord run_experiment(const ExperimentConfig& cfg, const RunContext& ctx);

}  // namespace bayesft::harness
