#include "lagnmpc/pipeline.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>

namespace lagnmpc {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return in;
}

std::string artifact(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

std::string train_tag(const RunConfig& cfg) {
  return fmt::format("{}_{}", to_string(cfg.train.head), to_string(cfg.train.loss));
}

/// Controller kind, plus the training loss for network controllers.
std::string controller_tag(const RunConfig& cfg) {
  if (is_online(cfg.controller.kind)) return std::string(to_string(cfg.controller.kind));
  return fmt::format("{}_{}", to_string(cfg.controller.kind), to_string(cfg.train.loss));
}

Matrix halton_matrix(const BoxSet& box, std::size_t count) {
  const auto states = halton_sample_states(StateRegion::box(box), count);
  Matrix m(box.dim(), static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = states[k];
  return m;
}

}  // namespace

FileHeader provenance(const RunConfig& cfg, const std::string& command) {
  FileHeader h;
  h.entries["tool_version"] = LAGNMPC_VERSION;
  h.entries["config_hash"] = cfg.hash();
  h.entries["command"] = command;
  h.entries["seed"] = std::to_string(cfg.seed);
  return h;
}

std::string dataset_path(const RunConfig& cfg) {
  return artifact(cfg, fmt::format("dataset_{}.csv", to_string(cfg.formulation)));
}
std::string weights_path(const RunConfig& cfg) { return artifact(cfg, "weights_" + train_tag(cfg) + ".txt"); }
std::string history_path(const RunConfig& cfg) { return artifact(cfg, "history_" + train_tag(cfg) + ".csv"); }
std::string quantized_path(const RunConfig& cfg) { return artifact(cfg, "quantized_" + train_tag(cfg) + ".txt"); }

NeuralPolicy load_policy(const std::string& path) {
  auto in = open_input(path);
  return read_policy(in);
}

QuantizedNet load_quantized(const std::string& path) {
  auto in = open_input(path);
  return read_quantized(in);
}

Dataset load_dataset(const std::string& path) {
  auto in = open_input(path);
  return read_dataset(in);
}

LaguerreBasis config_basis(const RunConfig& cfg) {
  return LaguerreBasis(cfg.mpc.laguerre_pole, cfg.mpc.laguerre_size, cfg.mpc.horizon);
}

Dataset cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  const BuckBoostPlant plant(cfg.plant);
  std::size_t candidates = 0;
  const auto states = halton_sample_states(StateRegion::box(cfg.mpc.state_box), cfg.samples, 0, &candidates);
  const bool laguerre = cfg.formulation == Formulation::LagNmpc;
  const LaguerreBasis basis = config_basis(cfg);
  const auto results = solve_states(cfg.mpc, plant, laguerre ? &basis : nullptr, states);

  std::string stem = dataset_path(cfg);
  stem.resize(stem.size() - 4);
  auto diag = open_output(stem + "_diagnostics.jsonl");
  for (std::size_t i = 0; i < results.size(); ++i) {
    const SolveResult& r = results[i];
    nlohmann::json j;
    j["index"] = i;
    j["x"] = {states[i](0), states[i](1)};
    j["status"] = to_string(r.status);
    j["cost"] = r.cost;
    j["max_violation"] = r.max_violation;
    j["iterations"] = r.iterations;
    j["best_start"] = r.best_start;
    diag << j.dump() << '\n';
  }

  Dataset data = assemble_dataset(cfg.mpc, cfg.formulation, states, results);
  FileHeader h = provenance(cfg, "gen-data");
  h.entries["halton_candidates"] = std::to_string(candidates);
  h.entries["rejected"] = std::to_string(candidates - states.size());
  auto out = open_output(dataset_path(cfg));
  write_dataset(out, data, h);

  log << fmt::format("N_d={} N_s={} rejected={} infeasible={} unconverged={}\n", data.requested, data.retained(),
                     candidates - states.size(), data.dropped_infeasible, data.dropped_unconverged);
  log << "wrote " << dataset_path(cfg) << '\n';
  return data;
}

TrainResult cmd_train(const RunConfig& cfg, const std::string& dataset, std::ostream& log) {
  const Dataset data = load_dataset(dataset);
  const BuckBoostPlant plant(cfg.plant);
  std::optional<LaguerreHead> head;
  if (cfg.train.head == Formulation::LagNmpc) {
    if (data.horizon != cfg.mpc.horizon) throw std::runtime_error("dataset horizon differs from mpc.horizon");
    head.emplace(config_basis(cfg), cfg.mpc.u_ss);
  }
  const InputBounds bounds{cfg.mpc.input_box.lower(0), cfg.mpc.input_box.upper(0)};
  TrainResult result = train(data, cfg.train, &plant, head ? &*head : nullptr, bounds, cfg.mpc.state_box);
  for (const auto& w : result.warnings) log << "warning: " << w << '\n';

  const FileHeader h = provenance(cfg, "train");
  auto wout = open_output(weights_path(cfg));
  write_policy(wout, result.policy, h);
  auto hout = open_output(history_path(cfg));
  write_history(hout, result.history, h);
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    log << fmt::format("epochs={} train_loss={:.6g} val_loss={:.6g} L_s={:.6g} L_x={:.6g}\n", last.epoch,
                       last.train_loss, last.val_loss, last.supervised, last.constraint);
  }
  log << "wrote " << weights_path(cfg) << '\n';
  return result;
}

Controller make_controller(const RunConfig& cfg, const PlantModel& plant, const NeuralPolicy* policy) {
  if (is_online(cfg.controller.kind)) return Controller::online(cfg.controller, cfg.mpc, plant);
  if (!policy) throw std::runtime_error("network controllers need a weight file");
  return Controller::neural(cfg.controller, *policy, cfg.mpc.x_ss, cfg.mpc.u_ss);
}

namespace {

std::optional<NeuralPolicy> policy_for(const RunConfig& cfg, const std::string& weights) {
  if (is_online(cfg.controller.kind)) return std::nullopt;
  return load_policy(weights.empty() ? weights_path(cfg) : weights);
}

}  // namespace

LawMap cmd_map(const RunConfig& cfg, const std::string& weights, std::ostream& log) {
  const BuckBoostPlant plant(cfg.plant);
  const auto policy = policy_for(cfg, weights);
  const GridSpec grid = GridSpec::over(cfg.mpc.state_box, cfg.grid_count1, cfg.grid_count2);
  const LawMap map =
      control_law_map([&] { return make_controller(cfg, plant, policy ? &*policy : nullptr); }, plant, grid,
                      cfg.mpc.state_box);
  const std::string stem = artifact(cfg, "map_" + controller_tag(cfg));
  fs::create_directories(cfg.out_dir);
  FileHeader h = provenance(cfg, "map");
  h.entries["controller"] = std::string(to_string(cfg.controller.kind));
  export_heatmap(map, stem, cfg.mpc.input_box.lower(0), cfg.mpc.input_box.upper(0), h);
  std::size_t infeasible = 0;
  for (auto f : map.feasible) infeasible += !f;
  log << fmt::format("nodes={} violations={} x1_violations={} x2_violations={} failed={}\n", map.size(),
                     violation_count(map), violation_count(map, 0, cfg.mpc.state_box),
                     violation_count(map, 1, cfg.mpc.state_box), infeasible);
  log << "wrote " << stem << ".csv and " << stem << ".svg\n";
  return map;
}

std::vector<Trajectory> cmd_simulate(const RunConfig& cfg, const std::string& weights, std::ostream& log) {
  const BuckBoostPlant plant(cfg.plant);
  const auto policy = policy_for(cfg, weights);
  std::vector<SimulationJob> jobs;
  for (const auto& x0 : cfg.initial_states) jobs.push_back({x0, cfg.steps});
  const auto trajectories = simulate_all(
      plant, [&] { return make_controller(cfg, plant, policy ? &*policy : nullptr); }, jobs, cfg.mpc.state_box);
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& t = trajectories[i];
    FileHeader h = provenance(cfg, "simulate");
    h.entries["controller"] = std::string(to_string(cfg.controller.kind));
    h.entries["x0"] = format_double(jobs[i].x0(0)) + " " + format_double(jobs[i].x0(1));
    const std::string path = artifact(cfg, fmt::format("trajectory_{}_{}.csv", controller_tag(cfg), i));
    auto out = open_output(path);
    write_trajectory(out, t, h);
    const TrajectoryMetrics m = trajectory_metrics(t, cfg.mpc.x_ss, 0.05, cfg.mpc.input_box);
    log << fmt::format("x0=({}, {}) steps={} entry_step={} final_distance={:.4g} state_violations={} "
                       "input_violations={}{}\n",
                       jobs[i].x0(0), jobs[i].x0(1), t.steps(), m.entry_step, m.final_distance, m.state_violations,
                       m.input_violations, t.error.empty() ? "" : " error: " + t.error);
    log << "wrote " << path << '\n';
  }
  return trajectories;
}

QuantizedNet cmd_quantize(const RunConfig& cfg, const std::string& weights, std::ostream& log) {
  const NeuralPolicy policy = load_policy(weights.empty() ? weights_path(cfg) : weights);
  const QuantizedNet net = quantize_net(policy, cfg.fixed);
  auto out = open_output(quantized_path(cfg));
  write_quantized(out, net, provenance(cfg, "quantize"));

  const Matrix samples = halton_matrix(cfg.mpc.state_box, cfg.bench_samples);
  const auto fixed = forward_fixed_batch(net, samples);
  double max_abs = 0.0;
  std::size_t overflows = 0;
  for (Eigen::Index k = 0; k < samples.cols(); ++k) {
    max_abs = std::max(max_abs, std::abs(fixed[k].u - policy.evaluate(samples.col(k))));
    overflows += fixed[k].overflow;
  }
  std::string stem = quantized_path(cfg);
  stem.resize(stem.size() - 4);
  auto report = open_output(stem + "_report.txt");
  write_header(report, "quantization-report", provenance(cfg, "quantize"));
  report << "frac_bits," << net.fmt.frac_bits << '\n'
         << "max_parameter_error," << format_double(net.max_error) << '\n'
         << "max_error_parameter," << net.max_error_parameter << '\n'
         << "samples," << samples.cols() << '\n'
         << "max_abs_output_error," << format_double(max_abs) << '\n'
         << "overflow_samples," << overflows << '\n';
  log << fmt::format("Q{}.{} max parameter error {:.3g} ({}), max output error {:.3g} over {} states, {} overflows\n",
                     31 - net.fmt.frac_bits, net.fmt.frac_bits, net.max_error, net.max_error_parameter, max_abs,
                     samples.cols(), overflows);
  log << "wrote " << quantized_path(cfg) << '\n';
  return net;
}

LatencyStats cmd_bench(const RunConfig& cfg, const std::string& quantized, std::ostream& log) {
  const QuantizedNet net = load_quantized(quantized.empty() ? quantized_path(cfg) : quantized);
  const Matrix samples = halton_matrix(cfg.mpc.state_box, cfg.bench_samples);
  const LatencyStats s = bench_latency(net, samples, cfg.bench_repetitions);
  auto out = open_output(artifact(cfg, "bench.csv"));
  write_header(out, "bench", provenance(cfg, "bench"));
  out << "engine,repetitions,min_ns,median_ns,p99_ns\n";
  out << "fixed," << s.repetitions << ',' << format_double(s.min_ns) << ',' << format_double(s.median_ns) << ','
      << format_double(s.p99_ns) << '\n';
  log << fmt::format("fixed-point inference: min {:.0f} ns, median {:.0f} ns, p99 {:.0f} ns ({} repetitions)\n",
                     s.min_ns, s.median_ns, s.p99_ns, s.repetitions);
  return s;
}

}  // namespace lagnmpc
