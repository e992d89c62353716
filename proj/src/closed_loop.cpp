#include "lagnmpc/closed_loop.hpp"

#include "lagnmpc/parallel.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace lagnmpc {

std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::OnlineNmpc: return "online-nmpc";
    case ControllerKind::OnlineLagNmpc: return "online-lagnmpc";
    case ControllerKind::NnNmpc: return "nn-nmpc";
    case ControllerKind::NnLagNmpc: return "nn-lagnmpc";
  }
  return "unknown";
}

ControllerKind parse_controller_kind(std::string_view s) {
  for (auto k : {ControllerKind::OnlineNmpc, ControllerKind::OnlineLagNmpc, ControllerKind::NnNmpc,
                 ControllerKind::NnLagNmpc}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown controller kind '" + std::string(s) + "'");
}

void ControllerSpec::validate() const {
  if (offset_free && !(epsilon > 0)) throw ConfigError("offset-free trigger radius must be positive");
}

double offset_free_input(double raw, double at_ss, double u_ss) { return (raw - at_ss) + u_ss; }

Controller Controller::online(ControllerSpec spec, const MpcConfig& cfg, const PlantModel& plant) {
  spec.validate();
  if (!is_online(spec.kind)) throw std::invalid_argument("online() needs an online controller kind");
  Controller c;
  c.spec_ = spec;
  c.input_box_ = cfg.input_box;
  c.x_ss_ = cfg.x_ss;
  c.u_ss_ = cfg.u_ss;
  c.at_ss_ = std::numeric_limits<double>::quiet_NaN();
  if (spec.kind == ControllerKind::OnlineLagNmpc) {
    c.solver_ = std::make_shared<MpcSolver>(cfg, plant, LaguerreBasis(cfg.laguerre_pole, cfg.laguerre_size, cfg.horizon));
  } else {
    c.solver_ = std::make_shared<MpcSolver>(cfg, plant);
  }
  return c;
}

Controller Controller::neural(ControllerSpec spec, NeuralPolicy policy, Vector x_ss, double u_ss) {
  spec.validate();
  if (is_online(spec.kind)) throw std::invalid_argument("neural() needs a network controller kind");
  const Formulation expected = spec.kind == ControllerKind::NnNmpc ? Formulation::Nmpc : Formulation::LagNmpc;
  if (policy.formulation != expected) {
    throw std::invalid_argument("network formulation does not match controller kind " + std::string(to_string(spec.kind)));
  }
  policy.validate();
  Controller c;
  c.spec_ = spec;
  c.input_box_ = BoxSet::interval(policy.bounds.lower, policy.bounds.upper);
  c.x_ss_ = std::move(x_ss);
  c.u_ss_ = u_ss;
  c.at_ss_ = policy.evaluate(c.x_ss_);
  c.policy_ = std::move(policy);
  return c;
}

ControlOutput Controller::control(ConstVectorRef x, bool allow_offset_free) {
  ControlOutput out;
  if (!x.allFinite()) {
    out.ok = false;
    out.error = "non-finite state";
    return out;
  }
  const double lo = input_box_.lower(0);
  const double hi = input_box_.upper(0);
  if (solver_) {
    // Online laws are applied as solved; the offset correction targets network error only.
    try {
      const SolveResult r = solver_->solve(x);
      if (r.status == SolveStatus::Infeasible) {
        out.ok = false;
        out.error = "solver infeasible";
        return out;
      }
      out.u = clamp(r.first_input(), lo, hi);
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
      return out;
    }
  } else {
    out.u = policy_->evaluate(x);
    if (allow_offset_free && spec_.offset_free && (x - x_ss_).norm() <= spec_.epsilon) {
      out.u = clamp(offset_free_input(out.u, at_ss_, u_ss_), lo, hi);
      out.offset_free = true;
    }
  }
  out.saturated = out.u <= lo || out.u >= hi;
  return out;
}

Trajectory simulate(const PlantModel& plant, Controller& controller, ConstVectorRef x0, int steps,
                    const BoxSet& state_box) {
  if (steps < 1) throw std::invalid_argument("simulation needs at least one step");
  if (x0.size() != plant.state_dim()) throw std::invalid_argument("initial state has the wrong dimension");
  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.emplace_back(x0);
  Vector next(plant.state_dim());
  for (int t = 0; t < steps; ++t) {
    const ControlOutput c = controller.control(traj.states.back());
    if (!c.ok) {
      traj.status = TrajectoryStatus::ControllerError;
      traj.error = "step " + std::to_string(t) + ": " + c.error;
      break;
    }
    plant.step(traj.states.back(), c.u, next);
    traj.inputs.push_back(c.u);
    traj.flags.push_back({c.offset_free, c.saturated, !state_box.contains(next)});
    traj.states.push_back(next);
  }
  return traj;
}

std::vector<Trajectory> simulate_all(const PlantModel& plant, const std::function<Controller()>& make,
                                     const std::vector<SimulationJob>& jobs, const BoxSet& state_box) {
  std::vector<Trajectory> out(jobs.size());
  omp::ExceptionSlot error;
  const auto n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    error.run([&] {
      Controller c = make();
      out[i] = simulate(plant, c, jobs[i].x0, jobs[i].steps, state_box);
    });
  }
  error.rethrow();
  return out;
}

TrajectoryMetrics trajectory_metrics(const Trajectory& traj, ConstVectorRef x_ss, double radius,
                                     const BoxSet& input_box) {
  TrajectoryMetrics m;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    if ((traj.states[t] - x_ss).norm() <= radius) {
      m.entry_step = static_cast<int>(t);
      break;
    }
  }
  if (!traj.states.empty()) m.final_distance = (traj.states.back() - x_ss).norm();
  for (const auto& f : traj.flags) m.state_violations += f.state_violation;
  for (double u : traj.inputs) m.input_violations += !input_box.contains(Vector::Constant(1, u));
  return m;
}

void write_trajectory(std::ostream& out, const Trajectory& traj, const FileHeader& provenance) {
  FileHeader header = provenance;
  header.entries["steps"] = std::to_string(traj.steps());
  header.entries["status"] = traj.status == TrajectoryStatus::Completed ? "completed" : "controller_error";
  if (!traj.error.empty()) header.entries["error"] = traj.error;
  write_header(out, "trajectory", header);
  out << "t,x1,x2,u,offset_free,saturated,state_violation\n";
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const Vector& x = traj.states[t];
    out << t << ',' << format_double(x(0)) << ',' << format_double(x(1));
    if (t < traj.inputs.size()) {
      const StepFlags& f = traj.flags[t];
      out << ',' << format_double(traj.inputs[t]) << ',' << f.offset_free << ',' << f.saturated << ','
          << f.state_violation << '\n';
    } else {
      out << ",,,,\n";
    }
  }
}

Trajectory read_trajectory(std::istream& in) {
  const FileHeader header = read_header(in);
  Trajectory traj;
  if (header.has("status") && header.at("status") != "completed") traj.status = TrajectoryStatus::ControllerError;
  if (header.has("error")) traj.error = header.at("error");
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("trajectory file lacks a column header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw std::invalid_argument("trajectory row has the wrong number of fields");
    Vector x(2);
    x << parse_double(f[1]), parse_double(f[2]);
    traj.states.push_back(x);
    if (!f[3].empty()) {
      traj.inputs.push_back(parse_double(f[3]));
      traj.flags.push_back({f[4] == "1", f[5] == "1", f[6] == "1"});
    }
  }
  return traj;
}

}  // namespace lagnmpc
