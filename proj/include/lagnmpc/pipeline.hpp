#pragma once

#include "lagnmpc/config.hpp"

#include <iosfwd>
#include <string>

namespace lagnmpc {

/// Header entries shared by every output file: tool version, config hash, command.
FileHeader provenance(const RunConfig& cfg, const std::string& command);

/// Default artifact locations under cfg.out_dir.
std::string dataset_path(const RunConfig& cfg);
std::string weights_path(const RunConfig& cfg);
std::string history_path(const RunConfig& cfg);
std::string quantized_path(const RunConfig& cfg);

NeuralPolicy load_policy(const std::string& path);
QuantizedNet load_quantized(const std::string& path);
Dataset load_dataset(const std::string& path);

/// Laguerre basis and head implied by the MPC settings.
LaguerreBasis config_basis(const RunConfig& cfg);

/// Halton sampling of X, one MPC solve per state, dataset plus per-solve
/// diagnostics (JSON lines). Returns the dataset.
Dataset cmd_gen_data(const RunConfig& cfg, std::ostream& log);

TrainResult cmd_train(const RunConfig& cfg, const std::string& dataset, std::ostream& log);

/// Law map of the configured controller kind; `weights` is ignored for online kinds.
LawMap cmd_map(const RunConfig& cfg, const std::string& weights, std::ostream& log);

std::vector<Trajectory> cmd_simulate(const RunConfig& cfg, const std::string& weights, std::ostream& log);

QuantizedNet cmd_quantize(const RunConfig& cfg, const std::string& weights, std::ostream& log);

LatencyStats cmd_bench(const RunConfig& cfg, const std::string& quantized, std::ostream& log);

/// Builds the configured controller; neural kinds read `weights`.
Controller make_controller(const RunConfig& cfg, const PlantModel& plant, const NeuralPolicy* policy);

}  // namespace lagnmpc
