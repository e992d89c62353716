#include "lagnmpc/closed_loop.hpp"
#include "lagnmpc/rng.hpp"
#include "lagnmpc/verify.hpp"

#include <doctest.h>

#include <sstream>

using namespace lagnmpc;

namespace {

NeuralPolicy random_policy(Formulation f, std::uint64_t seed, double scale = 0.5) {
  const LaguerreBasis basis(0.9, 4, 20);
  NeuralPolicy p;
  p.formulation = f;
  p.params = random_mlp({2, 2, 20, f == Formulation::LagNmpc ? 4 : 1}, seed, scale);
  if (f == Formulation::LagNmpc) p.head = LaguerreHead(basis, 0.4);
  return p;
}

}  // namespace

TEST_CASE("offset-free correction") {
  CHECK(offset_free_input(0.42, 0.42, 0.4) == 0.4);
  CHECK(offset_free_input(0.37, 0.4, 0.4) == 0.37);
  CHECK(offset_free_input(0.35, 0.42, 0.4) == doctest::Approx(0.33).epsilon(1e-12));
}

TEST_CASE("neural controllers") {
  const MpcConfig cfg = default_mpc_config();
  for (Formulation f : {Formulation::Nmpc, Formulation::LagNmpc}) {
    const ControllerKind kind = f == Formulation::Nmpc ? ControllerKind::NnNmpc : ControllerKind::NnLagNmpc;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const NeuralPolicy policy = random_policy(f, seed);
      Controller on = Controller::neural({kind, true, 0.3}, policy, cfg.x_ss, cfg.u_ss);
      Controller off = Controller::neural({kind, false, 0.3}, policy, cfg.x_ss, cfg.u_ss);
      CHECK(on.control(cfg.x_ss).u == 0.4);
      CHECK(on.control(cfg.x_ss).offset_free);
      CHECK(on.at_ss() == policy.evaluate(cfg.x_ss));
      Rng rng(seed);
      for (int k = 0; k < 100; ++k) {
        const Eigen::Vector2d x(rng.uniform(-1.0, 3.0), rng.uniform(-25.0, 5.0));
        const ControlOutput a = on.control(x);
        CHECK(a.u >= 0.1);
        CHECK(a.u <= 0.9);
        if ((x - cfg.x_ss).norm() > 0.3) CHECK(a.u == off.control(x).u);
      }
      // disabling the correction per call reproduces the raw law
      CHECK(on.control(cfg.x_ss, false).u == off.control(cfg.x_ss).u);
    }
  }
  ControllerSpec bad{ControllerKind::NnLagNmpc, true, 0.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_controller_kind("online-lagnmpc") == ControllerKind::OnlineLagNmpc);
  CHECK_THROWS(parse_controller_kind("pid"));
}

TEST_CASE("trajectories") {
  const MpcConfig cfg = default_mpc_config();
  const BuckBoostPlant plant;
  const NeuralPolicy policy = random_policy(Formulation::LagNmpc, 3);
  Controller c = Controller::neural({ControllerKind::NnLagNmpc, true, 0.3}, policy, cfg.x_ss, cfg.u_ss);

  const Trajectory eq = simulate(plant, c, cfg.x_ss, 200);
  CHECK(eq.states.size() == 201);
  for (const auto& x : eq.states) CHECK((x - cfg.x_ss).cwiseAbs().maxCoeff() <= 1e-8);

  const Trajectory t = simulate(plant, c, Eigen::Vector2d(0.5, -19.0), 100);
  REQUIRE(t.steps() == 100);
  Vector x = t.states[0];
  for (int k = 0; k < t.steps(); ++k) {
    CHECK(t.inputs[k] >= 0.1);
    CHECK(t.inputs[k] <= 0.9);
    x = plant.next_state(x, t.inputs[k]);
    CHECK(x == t.states[k + 1]);
    CHECK(t.flags[k].state_violation == !cfg.state_box.contains(x));
  }

  std::stringstream io;
  write_trajectory(io, t);
  const Trajectory back = read_trajectory(io);
  CHECK(back.states == t.states);
  CHECK(back.inputs == t.inputs);
  CHECK(back.flags.size() == t.flags.size());

  const TrajectoryMetrics m = trajectory_metrics(eq, cfg.x_ss, 0.05, cfg.input_box);
  CHECK(m.entry_step == 0);
  CHECK(m.final_distance <= 1e-8);
  CHECK(m.input_violations == 0);
  CHECK_THROWS(simulate(plant, c, cfg.x_ss, 0));
}

TEST_CASE("online controller in closed loop") {
  const MpcConfig cfg = default_mpc_config();
  const BuckBoostPlant plant;
  Controller c = Controller::online({ControllerKind::OnlineLagNmpc}, cfg, plant);
  // The capacitor voltage settles slowly under this cost; the loop needs about
  // 2600 steps to enter a 1e-2 neighbourhood.
  const Trajectory t = simulate(plant, c, Eigen::Vector2d(0.01, 0.0), 4000);
  REQUIRE(t.status == TrajectoryStatus::Completed);
  CHECK((t.states.back() - Eigen::Vector2d(0.101, -10.0)).norm() <= 1e-2);
  const TrajectoryMetrics m = trajectory_metrics(t, cfg.x_ss, 0.05, cfg.input_box);
  CHECK(m.input_violations == 0);
  CHECK(m.state_violations == 0);
  CHECK((t.states[600] - cfg.x_ss).norm() < (t.states[0] - cfg.x_ss).norm());

  // parallel simulation equals the sequential one
  const std::vector<SimulationJob> jobs{{Eigen::Vector2d(0.01, 0.0), 40}, {Eigen::Vector2d(0.5, -19.0), 40}};
  const auto all = simulate_all(plant, [&] { return Controller::online({ControllerKind::OnlineLagNmpc}, cfg, plant); }, jobs);
  Controller fresh = Controller::online({ControllerKind::OnlineLagNmpc}, cfg, plant);
  CHECK(all[1].states == simulate(plant, fresh, jobs[1].x0, 40).states);

  // a state from which no admissible input keeps the trajectory in X
  Controller c2 = Controller::online({ControllerKind::OnlineNmpc}, cfg, plant);
  const ControlOutput out = c2.control(Eigen::Vector2d(2.0, -0.5));
  CHECK_FALSE(out.ok);
  const Trajectory cut = simulate(plant, c2, Eigen::Vector2d(2.0, -0.5), 10);
  CHECK(cut.status == TrajectoryStatus::ControllerError);
  CHECK(cut.steps() == 0);
  CHECK_FALSE(cut.error.empty());
}
