#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "bayesft/bayesft.h"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool quiet = false;
  bool check_only = false;
};

int run(const std::string& command, const Options& opt) {
  std::ifstream in(opt.config, std::ios::binary);
  if (!in) {
    std::cerr << "bayesft: cannot read config " << opt.config << '\n';
    return BFT_ERR_CONFIG;
  }
  std::stringstream text;
  text << in.rdbuf();
  const std::uint64_t* seed = opt.seed ? &*opt.seed : nullptr;

  bft_status st;
  if (opt.check_only) {
    char hash[17] = {};
    st = bft_validate_config(command.c_str(), text.str().c_str(), seed, hash);
    if (st == BFT_OK) std::cout << hash << '\n';
  } else {
    st = bft_run_experiment(command.c_str(), text.str().c_str(), opt.out_dir.c_str(), seed, opt.quiet ? 0 : 1);
  }
  if (st == BFT_OK) return 0;
  std::cerr << "bayesft: " << bft_status_name(st) << " error: " << bft_last_error() << '\n';
  return st == BFT_ERR_CONFIG ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drift-robust dropout search for analog-memory networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", bft_version());

  Options opt;
  std::string chosen;
  const struct {
    const char* name;
    const char* help;
  } commands[] = {
      {"ablate", "Architecture ablation sweeps (dropout, normalization, depth, activation)"},
      {"boundary", "Decision-boundary distortion demo on two moons"},
      {"sweep", "Train one model and sweep test accuracy over drift levels"},
      {"optimize", "Bayesian search over per-layer dropout rates"},
      {"compare", "Plain training vs the dropout search, with accuracy gaps"},
      {"random-search", "Random search baseline over dropout rates"},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "Experiment config (JSON)")->required();
    sub->add_option("--seed", opt.seed, "Override the config seed");
    sub->add_option("--out-dir", opt.out_dir, "Output directory")->capture_default_str();
    sub->add_flag("-q,--quiet", opt.quiet, "No progress output on stderr");
    sub->add_flag("--check", opt.check_only, "Validate the config, print its hash and exit");
    sub->callback([&chosen, name = std::string(c.name)] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return run(chosen, opt);
}
