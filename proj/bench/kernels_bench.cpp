// Serial reference vs OpenMP kernel for dataset solving, law-map evaluation
// and fixed-point batch inference. Set OMP_NUM_THREADS to vary the team size.
#include "lagnmpc/pipeline.hpp"
#include "lagnmpc/verify.hpp"

#include <benchmark/benchmark.h>

using namespace lagnmpc;

namespace {

const RunConfig& config() {
  static const RunConfig cfg = default_config();
  return cfg;
}

const std::vector<Vector>& solve_states_input() {
  static const auto states = halton_sample_states(StateRegion::box(config().mpc.state_box), 32);
  return states;
}

template <bool Parallel>
void BM_SolveStates(benchmark::State& state) {
  const RunConfig& cfg = config();
  const BuckBoostPlant plant(cfg.plant);
  const LaguerreBasis basis = config_basis(cfg);
  for (auto _ : state) {
    auto r = Parallel ? solve_states(cfg.mpc, plant, &basis, solve_states_input())
                      : solve_states_serial(cfg.mpc, plant, &basis, solve_states_input());
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(solve_states_input().size()));
}

const NeuralPolicy& policy() {
  static const NeuralPolicy p = [] {
    const RunConfig& cfg = config();
    const LaguerreBasis basis = config_basis(cfg);
    NeuralPolicy n;
    n.formulation = Formulation::LagNmpc;
    n.params = random_mlp({2, 2, 20, basis.size()}, cfg.seed, 0.5);
    n.bounds = {cfg.mpc.input_box.lower(0), cfg.mpc.input_box.upper(0)};
    n.head = LaguerreHead(basis, cfg.mpc.u_ss);
    return n;
  }();
  return p;
}

template <bool Parallel>
void BM_LawMap(benchmark::State& state) {
  const RunConfig& cfg = config();
  const BuckBoostPlant plant(cfg.plant);
  const GridSpec grid = GridSpec::over(cfg.mpc.state_box, 100, 100);
  auto make = [&] { return Controller::neural({ControllerKind::NnLagNmpc}, policy(), cfg.mpc.x_ss, cfg.mpc.u_ss); };
  for (auto _ : state) {
    auto m = Parallel ? control_law_map(make, plant, grid, cfg.mpc.state_box)
                      : control_law_map_serial(make, plant, grid, cfg.mpc.state_box);
    benchmark::DoNotOptimize(m.u.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(grid.size()));
}

template <bool Parallel>
void BM_FixedBatch(benchmark::State& state) {
  const QuantizedNet q = quantize_net(policy(), config().fixed);
  const auto points = halton_sample_states(StateRegion::box(config().mpc.state_box), 10000);
  Matrix xs(2, static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) xs.col(static_cast<Eigen::Index>(k)) = points[k];
  for (auto _ : state) {
    auto out = Parallel ? forward_fixed_batch(q, xs) : forward_fixed_batch_serial(q, xs);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * xs.cols());
}

}  // namespace

BENCHMARK(BM_SolveStates<false>)->Name("solve_states/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveStates<true>)->Name("solve_states/openmp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LawMap<false>)->Name("law_map/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LawMap<true>)->Name("law_map/openmp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FixedBatch<false>)->Name("fixed_batch/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_FixedBatch<true>)->Name("fixed_batch/openmp")->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
