#include "lagnmpc/parallel.hpp"
#include "lagnmpc/pipeline.hpp"
#include "lagnmpc/verify.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace lagnmpc;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string dataset;
  std::string weights;
  std::string quantized;
  bool full = false;
};

RunConfig load(const Options& o) {
  RunConfig cfg = o.config.empty() ? default_config(o.overrides) : load_config(o.config, o.overrides);
  omp::set_threads(cfg.threads);
  return cfg;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("-c,--config", o.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", o.overrides, "override, section.key=value (repeatable)");
}

int verify(const RunConfig& cfg, bool full) {
  const std::string work = (std::filesystem::path(cfg.out_dir) / "verify").string();
  std::filesystem::create_directories(work);
  AcceptanceSuite suite(cfg, work);
  const auto results = full ? suite.run_all(&std::cout) : suite.run_quick(&std::cout);
  const int failed = failures(results);
  std::cout << (failed == 0 ? "verify: all criteria passed" : "verify: " + std::to_string(failed) + " failing")
            << std::endl;
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laguerre-based NMPC with neural approximation"};
  app.set_version_flag("--version", LAGNMPC_VERSION);
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "sample X and solve the MPC problem at every state");
  auto* trn = app.add_subcommand("train", "train a network on a dataset");
  trn->add_option("--dataset", o.dataset, "dataset file (default: out_dir/dataset_<formulation>.csv)");
  auto* map = app.add_subcommand("map", "evaluate a controller on a state grid");
  map->add_option("--weights", o.weights, "network weights for neural controllers");
  auto* sim = app.add_subcommand("simulate", "closed-loop trajectories");
  sim->add_option("--weights", o.weights, "network weights for neural controllers");
  auto* qnt = app.add_subcommand("quantize", "fixed-point export of a trained network");
  qnt->add_option("--weights", o.weights, "network weights");
  auto* bch = app.add_subcommand("bench", "latency of float and fixed-point inference");
  bch->add_option("--quantized", o.quantized, "quantized weight file");
  auto* ver = app.add_subcommand("verify", "run the acceptance checks");
  ver->add_flag("--full", o.full, "include the checks that train networks and simulate");
  auto* cfg_cmd = app.add_subcommand("config", "print the effective configuration");
  for (auto* c : {gen, trn, map, sim, qnt, bch, ver, cfg_cmd}) add_common(c, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = load(o);
    if (*gen) {
      cmd_gen_data(cfg, std::cout);
    } else if (*trn) {
      cmd_train(cfg, o.dataset.empty() ? dataset_path(cfg) : o.dataset, std::cout);
    } else if (*map) {
      cmd_map(cfg, o.weights.empty() ? weights_path(cfg) : o.weights, std::cout);
    } else if (*sim) {
      cmd_simulate(cfg, o.weights.empty() ? weights_path(cfg) : o.weights, std::cout);
    } else if (*qnt) {
      cmd_quantize(cfg, o.weights.empty() ? weights_path(cfg) : o.weights, std::cout);
    } else if (*bch) {
      cmd_bench(cfg, o.quantized.empty() ? quantized_path(cfg) : o.quantized, std::cout);
    } else if (*ver) {
      return verify(cfg, o.full);
    } else if (*cfg_cmd) {
      write_config(std::cout, cfg);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
