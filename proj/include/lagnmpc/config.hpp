#pragma once

#include "lagnmpc/closed_loop.hpp"
#include "lagnmpc/evaluation.hpp"
#include "lagnmpc/fixed_point.hpp"
#include "lagnmpc/mpc.hpp"
#include "lagnmpc/training.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace lagnmpc {

/// Every setting of a pipeline run. A default-constructed RunConfig is the
/// reference experiment.
struct RunConfig {
  BuckBoostParams plant;
  double x2_ss = -10.0;
  MpcConfig mpc = default_mpc_config();
  Formulation formulation = Formulation::LagNmpc;  // problem solved by gen-data
  std::size_t samples = 20000;                     // N_d
  TrainConfig train;
  ControllerSpec controller{ControllerKind::NnLagNmpc, true, 0.3};
  int steps = 600;
  std::vector<Vector> initial_states;  // default: [0.01, 0] and [0.5, -19]
  int grid_count1 = 100;
  int grid_count2 = 100;
  FixedFormat fixed;
  int bench_repetitions = 10000;
  std::size_t bench_samples = 1000;
  std::string out_dir = "out";
  std::uint64_t seed = 42;
  int threads = 0;  // 0 keeps the OpenMP default

  RunConfig();
  /// Throws ConfigError.
  void validate() const;
  /// Canonical "section.key=value" lines.
  std::string canonical() const;
  /// FNV-1a of the canonical lines that affect results (out_dir and threads excluded).
  std::string hash() const;
};

/// Parses INI text. Unknown sections or keys are errors. `overrides` are
/// "section.key=value" strings applied after the file.
RunConfig parse_config(std::istream& in, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
/// Defaults plus overrides only.
RunConfig default_config(const std::vector<std::string>& overrides = {});

void write_config(std::ostream& out, const RunConfig& cfg);

}  // namespace lagnmpc
