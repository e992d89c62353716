#pragma once

#include "lagnmpc/io.hpp"
#include "lagnmpc/mlp.hpp"
#include "lagnmpc/mpc.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lagnmpc {

enum class ControllerKind { OnlineNmpc, OnlineLagNmpc, NnNmpc, NnLagNmpc };

std::string_view to_string(ControllerKind k);
ControllerKind parse_controller_kind(std::string_view s);
inline bool is_online(ControllerKind k) {
  return k == ControllerKind::OnlineNmpc || k == ControllerKind::OnlineLagNmpc;
}

struct ControllerSpec {
  ControllerKind kind = ControllerKind::NnLagNmpc;
  bool offset_free = false;  // only neural controllers use the correction
  double epsilon = 0.3;      // trigger radius around x_ss

  void validate() const;
};

/// raw - at_ss + u_ss.
double offset_free_input(double raw, double at_ss, double u_ss);

struct ControlOutput {
  double u = 0.0;
  bool offset_free = false;
  bool saturated = false;
  bool ok = true;
  std::string error;
};

/// An online MPC law or a trained network, with the optional offset-free
/// correction. Online controllers own a solver, so one instance per thread.
class Controller {
 public:
  static Controller online(ControllerSpec spec, const MpcConfig& cfg, const PlantModel& plant);
  static Controller neural(ControllerSpec spec, NeuralPolicy policy, Vector x_ss, double u_ss);

  /// `allow_offset_free = false` evaluates the plain law (used for law maps).
  ControlOutput control(ConstVectorRef x, bool allow_offset_free = true);

  const ControllerSpec& spec() const { return spec_; }
  const BoxSet& input_box() const { return input_box_; }
  /// Network output at x_ss, cached once; NaN for online controllers.
  double at_ss() const { return at_ss_; }

 private:
  Controller() = default;

  ControllerSpec spec_;
  BoxSet input_box_;
  Vector x_ss_;
  double u_ss_ = 0.0;
  double at_ss_ = 0.0;
  std::optional<NeuralPolicy> policy_;
  std::shared_ptr<MpcSolver> solver_;
};

enum class TrajectoryStatus { Completed, ControllerError };

struct StepFlags {
  bool offset_free = false;
  bool saturated = false;
  bool state_violation = false;  // the state reached by this step lies outside X
};

struct Trajectory {
  std::vector<Vector> states;  // T+1 entries unless a controller error cut it short
  std::vector<double> inputs;
  std::vector<StepFlags> flags;
  TrajectoryStatus status = TrajectoryStatus::Completed;
  std::string error;

  int steps() const { return static_cast<int>(inputs.size()); }
};

/// Runs T steps of control and plant update.
Trajectory simulate(const PlantModel& plant, Controller& controller, ConstVectorRef x0, int steps,
                    const BoxSet& state_box = default_state_box());

/// Independent simulations in parallel; `make` builds a fresh controller per job.
struct SimulationJob {
  Vector x0;
  int steps = 600;
};
std::vector<Trajectory> simulate_all(const PlantModel& plant, const std::function<Controller()>& make,
                                     const std::vector<SimulationJob>& jobs,
                                     const BoxSet& state_box = default_state_box());

struct TrajectoryMetrics {
  int entry_step = -1;  // first t with |x_t - x_ss| <= radius, -1 if never
  double final_distance = 0.0;
  int state_violations = 0;
  int input_violations = 0;
};

TrajectoryMetrics trajectory_metrics(const Trajectory& traj, ConstVectorRef x_ss, double radius,
                                     const BoxSet& input_box);

/// Columns t,x1,x2,u,offset_free,saturated,state_violation; the last row holds
/// the final state with empty input fields.
void write_trajectory(std::ostream& out, const Trajectory& traj, const FileHeader& provenance = {});
Trajectory read_trajectory(std::istream& in);

}  // namespace lagnmpc
