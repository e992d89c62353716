#include "lagnmpc/mpc.hpp"

#include "lagnmpc/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lagnmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_psd(const Matrix& m) {
  if (m.rows() != m.cols() || !m.isApprox(m.transpose(), 1e-12)) return false;
  Eigen::LDLT<Matrix> ldlt(m);
  return ldlt.info() == Eigen::Success && (ldlt.vectorD().array() >= -1e-12).all();
}

void check_inputs(const MpcConfig& cfg, ConstVectorRef inputs) {
  if (inputs.size() != cfg.horizon) {
    throw std::invalid_argument("input sequence has length " + std::to_string(inputs.size()) +
                                ", horizon is " + std::to_string(cfg.horizon));
  }
}

double quad(const Matrix& w, const Vector& e) { return e.dot(w * e); }

}  // namespace

void MpcConfig::validate() const {
  if (horizon < 1) throw ConfigError("prediction horizon must be at least 1");
  const auto nx = x_ss.size();
  if (nx == 0) throw ConfigError("steady state is empty");
  if (Q.rows() != nx || P.rows() != nx) throw ConfigError("Q and P must match the state dimension");
  if (!is_psd(Q)) throw ConfigError("Q must be symmetric positive semidefinite");
  if (!is_psd(P)) throw ConfigError("P must be symmetric positive semidefinite");
  if (!(R > 0)) throw ConfigError("R must be positive");
  try {
    state_box.validate("state box");
    input_box.validate("input box");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (state_box.dim() != nx) throw ConfigError("state box dimension mismatch");
  if (input_box.dim() != 1) throw ConfigError("only single-input plants are supported");
  for (Eigen::Index i = 0; i < nx; ++i) {
    if (!(x_ss(i) > state_box.lower(i) && x_ss(i) < state_box.upper(i))) {
      throw ConfigError("steady state must lie in the interior of the state box");
    }
  }
  if (!(u_ss > input_box.lower(0) && u_ss < input_box.upper(0))) {
    throw ConfigError("steady-state input must lie in the interior of the input box");
  }
  if (laguerre_size < 1 || laguerre_size > horizon) {
    throw ConfigError("Laguerre size must lie in [1, horizon]");
  }
  if (!(laguerre_pole >= 0 && laguerre_pole < 1)) throw ConfigError("Laguerre pole must lie in [0, 1)");
  if (!(solver.stationarity_tol > 0 && solver.constraint_tol > 0)) {
    throw ConfigError("solver tolerances must be positive");
  }
  if (solver.max_iterations < 1 || solver.multistarts < 1) {
    throw ConfigError("solver iteration and start counts must be positive");
  }
}

MpcConfig default_mpc_config(const BuckBoostParams& params, double x2_ss) {
  const SteadyState ss = steady_state(params, x2_ss);
  MpcConfig cfg;
  cfg.horizon = 20;
  cfg.Q = Eigen::Vector2d(1.0, 0.1).asDiagonal();
  cfg.P = Eigen::Vector2d(10.0, 1.0).asDiagonal();
  cfg.R = 0.7;
  cfg.x_ss = ss.state();
  cfg.u_ss = ss.u;
  cfg.state_box = default_state_box();
  cfg.input_box = default_input_box();
  cfg.laguerre_size = 4;
  cfg.laguerre_pole = 0.9;
  return cfg;
}

std::string_view to_string(Formulation f) {
  return f == Formulation::Nmpc ? "nmpc" : "lagnmpc";
}

Formulation parse_formulation(std::string_view s) {
  if (s == "nmpc") return Formulation::Nmpc;
  if (s == "lagnmpc") return Formulation::LagNmpc;
  throw std::invalid_argument("unknown formulation '" + std::string(s) + "' (expected nmpc or lagnmpc)");
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

SolveStatus parse_solve_status(std::string_view s) {
  if (s == "converged") return SolveStatus::Converged;
  if (s == "max_iterations") return SolveStatus::MaxIterations;
  if (s == "infeasible") return SolveStatus::Infeasible;
  throw std::invalid_argument("unknown solver status '" + std::string(s) + "'");
}

Matrix rollout(const PlantModel& plant, ConstVectorRef x0, ConstVectorRef inputs) {
  const int nx = plant.state_dim();
  if (x0.size() != nx) throw std::invalid_argument("initial state has the wrong dimension");
  Matrix states(nx, inputs.size() + 1);
  states.col(0) = x0;
  Vector next(nx);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) {
    plant.step(states.col(i), inputs(i), next);
    states.col(i + 1) = next;
  }
  return states;
}

double nmpc_cost(const MpcConfig& cfg, const PlantModel& plant, ConstVectorRef x0,
                 ConstVectorRef inputs) {
  check_inputs(cfg, inputs);
  const Matrix states = rollout(plant, x0, inputs);
  double cost = 0.0;
  for (int i = 0; i < cfg.horizon; ++i) {
    const Vector e = states.col(i) - cfg.x_ss;
    const double du = inputs(i) - cfg.u_ss;
    cost += quad(cfg.Q, e) + cfg.R * du * du;
  }
  cost += quad(cfg.P, states.col(cfg.horizon) - cfg.x_ss);
  return cost;
}

double lagnmpc_cost(const MpcConfig& cfg, const LaguerreBasis& basis, const PlantModel& plant,
                    ConstVectorRef x0, ConstVectorRef eta) {
  return nmpc_cost(cfg, plant, x0, reconstruct_sequence(basis, eta, cfg.u_ss));
}

double constraint_violation(const MpcConfig& cfg, const PlantModel& plant, ConstVectorRef x0,
                            ConstVectorRef inputs) {
  check_inputs(cfg, inputs);
  const Matrix states = rollout(plant, x0, inputs);
  double worst = 0.0;
  for (int i = 1; i <= cfg.horizon; ++i) worst = std::max(worst, cfg.state_box.violation(states.col(i)));
  for (int i = 0; i < cfg.horizon; ++i) {
    worst = std::max({worst, inputs(i) - cfg.input_box.upper(0), cfg.input_box.lower(0) - inputs(i)});
  }
  return worst;
}

// ---------------------------------------------------------------------------

struct MpcSolver::Impl {
  MpcConfig cfg;
  const PlantModel* plant;
  std::optional<LaguerreBasis> basis;

  int nx = 0;
  int horizon = 0;
  int nz = 0;
  int ncon = 0;

  // Decision box; infinite for the Laguerre coefficients.
  Vector lo, hi;

  // Scratch, reused across evaluations.
  Vector x0;
  Vector inputs;
  Matrix states;
  std::vector<Matrix> sens;
  Matrix jac_x;
  Vector grad_u;
  Vector next;
  Vector e;
  Vector grad_obj;
  Vector g;
  Matrix G;
  Vector mult;

  // Augmented Lagrangian state.
  Vector lambda;
  double rho = 10.0;

  static constexpr double kRhoMax = 1e10;
  static constexpr int kMaxOuter = 40;
  static constexpr int kMaxInner = 100;

  Impl(MpcConfig c, const PlantModel& p, std::optional<LaguerreBasis> b)
      : cfg(std::move(c)), plant(&p), basis(std::move(b)) {
    cfg.validate();
    if (!plant->has_input_gradient()) throw ConfigError("the shooting solver needs the plant input gradient");
    nx = plant->state_dim();
    if (cfg.x_ss.size() != nx) throw ConfigError("steady state does not match the plant dimension");
    horizon = cfg.horizon;
    if (basis && basis->horizon() != horizon) {
      throw ConfigError("Laguerre basis horizon differs from the MPC horizon");
    }
    nz = basis ? basis->size() : horizon;
    ncon = 2 * nx * horizon + (basis ? 2 * horizon : 0);

    if (basis) {
      lo = Vector::Constant(nz, -kInf);
      hi = Vector::Constant(nz, kInf);
    } else {
      lo = Vector::Constant(nz, cfg.input_box.lower(0));
      hi = Vector::Constant(nz, cfg.input_box.upper(0));
    }

    inputs.resize(horizon);
    states.resize(nx, horizon + 1);
    sens.assign(horizon + 1, Matrix::Zero(nx, nz));
    jac_x.resize(nx, nx);
    grad_u.resize(nx);
    next.resize(nx);
    e.resize(nx);
    grad_obj.resize(nz);
    g.resize(ncon);
    G.resize(ncon, nz);
    mult.resize(ncon);
    lambda.resize(ncon);
  }

  void map_inputs(const Vector& z) {
    if (basis) {
      const Matrix& l = basis->matrix();
      for (int i = 0; i < horizon; ++i) {
        double acc = 0.0;
        for (int j = 0; j < nz; ++j) acc += l(i, j) * z(j);
        inputs(i) = acc + cfg.u_ss;
      }
    } else {
      inputs = z;
    }
  }

  Vector project(const Vector& z) const { return z.cwiseMax(lo).cwiseMin(hi); }

  /// Objective and constraints at z; with derivatives also grad_obj and G.
  double evaluate(const Vector& z, bool derivatives) {
    map_inputs(z);
    states.col(0) = x0;
    if (derivatives) sens[0].setZero();
    for (int i = 0; i < horizon; ++i) {
      const auto xi = states.col(i);
      plant->step(xi, inputs(i), next);
      states.col(i + 1) = next;
      if (derivatives) {
        plant->state_jacobian(xi, inputs(i), jac_x);
        plant->input_gradient(xi, inputs(i), grad_u);
        sens[i + 1].noalias() = jac_x * sens[i];
        if (basis) {
          sens[i + 1].noalias() += grad_u * basis->matrix().row(i);
        } else {
          sens[i + 1].col(i) += grad_u;
        }
      }
    }

    double cost = 0.0;
    if (derivatives) grad_obj.setZero();
    for (int i = 0; i <= horizon; ++i) {
      e = states.col(i) - cfg.x_ss;
      const Matrix& w = (i == horizon) ? cfg.P : cfg.Q;
      const Vector we = w * e;
      cost += e.dot(we);
      if (derivatives && i > 0) grad_obj.noalias() += 2.0 * sens[i].transpose() * we;
      if (i < horizon) {
        const double du = inputs(i) - cfg.u_ss;
        cost += cfg.R * du * du;
        if (derivatives) {
          if (basis) {
            grad_obj.noalias() += (2.0 * cfg.R * du) * basis->matrix().row(i).transpose();
          } else {
            grad_obj(i) += 2.0 * cfg.R * du;
          }
        }
      }
    }

    // State bounds are tightened by the constraint tolerance so a certified
    // solution keeps its predicted states inside the original box.
    const double margin = cfg.solver.constraint_tol;
    int k = 0;
    for (int i = 1; i <= horizon; ++i) {
      for (int j = 0; j < nx; ++j) {
        g(k) = states(j, i) - (cfg.state_box.upper(j) - margin);
        if (derivatives) G.row(k) = sens[i].row(j);
        ++k;
        g(k) = (cfg.state_box.lower(j) + margin) - states(j, i);
        if (derivatives) G.row(k) = -sens[i].row(j);
        ++k;
      }
    }
    if (basis) {
      for (int i = 0; i < horizon; ++i) {
        g(k) = inputs(i) - cfg.input_box.upper(0);
        if (derivatives) G.row(k) = basis->matrix().row(i);
        ++k;
        g(k) = cfg.input_box.lower(0) - inputs(i);
        if (derivatives) G.row(k) = -basis->matrix().row(i);
        ++k;
      }
    }
    return cost;
  }

  double max_violation() const { return std::max(0.0, g.maxCoeff()); }

  /// Augmented Lagrangian merit; fills grad when non-null.
  double merit(const Vector& z, Vector* grad) {
    const double cost = evaluate(z, grad != nullptr);
    double penalty = 0.0;
    for (int k = 0; k < ncon; ++k) {
      const double m = std::max(0.0, lambda(k) + rho * g(k));
      mult(k) = m;
      penalty += m * m - lambda(k) * lambda(k);
    }
    if (grad) *grad = grad_obj + G.transpose() * mult;
    return cost + penalty / (2.0 * rho);
  }

  double projected_gradient_norm(const Vector& z, const Vector& grad) const {
    return (z - project(z - grad)).lpNorm<Eigen::Infinity>();
  }

  Matrix hessian(const Vector& z, const Vector& grad) {
    Matrix h(nz, nz);
    Vector zp = z;
    Vector gp(nz);
    for (int k = 0; k < nz; ++k) {
      const double step = 1.5e-8 * std::max(1.0, std::abs(z(k)));
      zp(k) = z(k) + step;
      merit(zp, &gp);
      h.col(k) = (gp - grad) / step;
      zp(k) = z(k);
    }
    return 0.5 * (h + h.transpose());
  }

  static Vector solve_regularized(Matrix h, const Vector& rhs) {
    const double scale = std::max(1e-12, h.diagonal().cwiseAbs().maxCoeff());
    double shift = 0.0;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::LLT<Matrix> llt(h);
      if (llt.info() == Eigen::Success) return llt.solve(rhs);
      const double next_shift = shift == 0.0 ? 1e-10 * scale : shift * 10.0;
      h.diagonal().array() += next_shift - shift;
      shift = next_shift;
    }
    return rhs / scale;
  }

  /// Projected Newton on the merit function. Returns the final projected
  /// gradient norm.
  double minimize_merit(Vector& z, int& iterations, double tol) {
    Vector grad(nz), trial_grad(nz);
    double phi = merit(z, &grad);
    double pg = projected_gradient_norm(z, grad);

    for (int inner = 0; inner < kMaxInner; ++inner) {
      if (pg <= tol || iterations >= cfg.solver.max_iterations) break;
      ++iterations;

      const Matrix h = hessian(z, grad);
      const double eps_active = std::min(1e-6, pg);
      std::vector<int> free_idx;
      std::vector<char> active(nz, 0);
      for (int i = 0; i < nz; ++i) {
        if ((z(i) <= lo(i) + eps_active && grad(i) > 0) || (z(i) >= hi(i) - eps_active && grad(i) < 0)) {
          active[i] = 1;
        } else {
          free_idx.push_back(i);
        }
      }

      Vector d = Vector::Zero(nz);
      if (!free_idx.empty()) {
        const int nf = static_cast<int>(free_idx.size());
        Matrix hf(nf, nf);
        Vector gf(nf);
        for (int a = 0; a < nf; ++a) {
          gf(a) = grad(free_idx[a]);
          for (int b = 0; b < nf; ++b) hf(a, b) = h(free_idx[a], free_idx[b]);
        }
        const Vector df = solve_regularized(hf, -gf);
        for (int a = 0; a < nf; ++a) d(free_idx[a]) = df(a);
      }
      for (int i = 0; i < nz; ++i) {
        if (active[i]) d(i) = -grad(i) / std::max(h(i, i), 1e-8);
      }

      // Near a solution the merit decrease drowns in rounding, so a full
      // step that halves the projected gradient is accepted directly.
      Vector trial = project(z + d);
      double trial_phi = merit(trial, &trial_grad);
      double trial_pg = projected_gradient_norm(trial, trial_grad);
      bool accepted = pg < 1e-5 && trial_pg < 0.5 * pg &&
                      trial_phi <= phi + 1e-12 * std::max(1.0, std::abs(phi));

      double t = 1.0;
      for (int ls = 0; ls < 40 && !accepted; ++ls) {
        if (ls > 0) {
          trial = project(z + t * d);
          trial_phi = merit(trial, nullptr);
        }
        double predicted = 0.0;
        for (int i = 0; i < nz; ++i) {
          predicted += active[i] ? grad(i) * (z(i) - trial(i)) : -t * grad(i) * d(i);
        }
        if (predicted > 0 && phi - trial_phi >= 1e-4 * predicted) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }

      if (!accepted) {
        // Projected steepest descent fallback.
        t = 1.0 / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
        for (int ls = 0; ls < 60; ++ls) {
          trial = project(z - t * grad);
          trial_phi = merit(trial, nullptr);
          if (phi - trial_phi >= 1e-4 * grad.dot(z - trial) && trial_phi < phi) {
            accepted = true;
            break;
          }
          t *= 0.5;
        }
      }
      if (!accepted) break;

      const bool stalled = (trial - z).lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, z.lpNorm<Eigen::Infinity>());
      z = trial;
      phi = merit(z, &grad);
      pg = projected_gradient_norm(z, grad);
      if (stalled) break;
    }
    return pg;
  }

  struct StartOutcome {
    Vector z;
    double violation = kInf;
    bool converged = false;
    int iterations = 0;
  };

  StartOutcome run_start(Vector z) {
    StartOutcome out;
    z = project(z);
    lambda.setZero();
    rho = 10.0;
    double previous = kInf;
    const auto& opt = cfg.solver;

    for (int outer = 0; outer < kMaxOuter; ++outer) {
      const double pg = minimize_merit(z, out.iterations, opt.stationarity_tol);
      // merit() at the accepted z already left g and mult in place.
      merit(z, nullptr);
      const double violation = max_violation();
      lambda = mult;
      out.z = z;
      out.violation = violation;
      if (violation <= opt.constraint_tol && pg <= opt.stationarity_tol) {
        out.converged = true;
        break;
      }
      if (out.iterations >= opt.max_iterations) break;
      if (violation > opt.constraint_tol) {
        if (rho >= kRhoMax && violation > 0.99 * previous) break;
        if (violation > 0.25 * previous) rho = std::min(rho * 10.0, kRhoMax);
      }
      previous = violation;
    }
    return out;
  }

  std::vector<Vector> starting_points() {
    std::vector<Vector> starts;
    const double umin = cfg.input_box.lower(0);
    const double umax = cfg.input_box.upper(0);
    std::optional<Eigen::LDLT<Matrix>> normal;
    if (basis) normal.emplace(basis->matrix().transpose() * basis->matrix());
    for (int s = 0; s < cfg.solver.multistarts; ++s) {
      Vector u = Vector::Constant(horizon, cfg.u_ss);
      if (s > 0) {
        Rng rng(Rng::mix(cfg.solver.seed) ^ static_cast<std::uint64_t>(s));
        for (int i = 0; i < horizon; ++i) u(i) = rng.uniform(umin, umax);
      }
      if (basis) {
        // Least-squares coefficients of the sampled sequence.
        starts.push_back(normal->solve(basis->matrix().transpose() * (u.array() - cfg.u_ss).matrix()));
      } else {
        starts.push_back(u);
      }
    }
    return starts;
  }

  SolveResult solve(ConstVectorRef x) {
    if (x.size() != nx) throw std::invalid_argument("initial state has the wrong dimension");
    if (!cfg.state_box.contains(x)) throw std::domain_error("initial state lies outside the state constraint set");
    x0 = x;

    SolveResult result;
    int best = -1;
    StartOutcome best_outcome;
    double best_cost = kInf;
    bool best_feasible = false;
    int total_iterations = 0;

    const auto starts = starting_points();
    for (int s = 0; s < static_cast<int>(starts.size()); ++s) {
      StartOutcome out = run_start(starts[s]);
      total_iterations += out.iterations;
      const double cost = evaluate(out.z, false);
      const bool feasible = out.violation <= cfg.solver.constraint_tol;
      bool better;
      if (best < 0) {
        better = true;
      } else if (feasible != best_feasible) {
        better = feasible;
      } else if (feasible) {
        better = cost < best_cost || (cost == best_cost && out.converged && !best_outcome.converged);
      } else {
        better = out.violation < best_outcome.violation;
      }
      if (better) {
        best = s;
        best_cost = cost;
        best_feasible = feasible;
        best_outcome = std::move(out);
      }
    }

    map_inputs(best_outcome.z);
    result.sequence = inputs;
    if (basis) result.coefficients = best_outcome.z;
    result.cost = nmpc_cost(cfg, *plant, x0, result.sequence);
    result.max_violation = constraint_violation(cfg, *plant, x0, result.sequence);
    result.iterations = total_iterations;
    result.best_start = best;
    if (result.max_violation > cfg.solver.constraint_tol) {
      result.status = SolveStatus::Infeasible;
    } else {
      result.status = best_outcome.converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
    }
    return result;
  }
};

MpcSolver::MpcSolver(MpcConfig cfg, const PlantModel& plant)
    : impl_(std::make_unique<Impl>(std::move(cfg), plant, std::nullopt)) {}

MpcSolver::MpcSolver(MpcConfig cfg, const PlantModel& plant, const LaguerreBasis& basis)
    : impl_(std::make_unique<Impl>(std::move(cfg), plant, basis)) {}

MpcSolver::~MpcSolver() = default;
MpcSolver::MpcSolver(MpcSolver&&) noexcept = default;
MpcSolver& MpcSolver::operator=(MpcSolver&&) noexcept = default;

SolveResult MpcSolver::solve(ConstVectorRef x0) { return impl_->solve(x0); }
const MpcConfig& MpcSolver::config() const { return impl_->cfg; }
bool MpcSolver::laguerre() const { return impl_->basis.has_value(); }

SolveResult solve_nmpc(const MpcConfig& cfg, const PlantModel& plant, ConstVectorRef x0) {
  return MpcSolver(cfg, plant).solve(x0);
}

SolveResult solve_lagnmpc(const MpcConfig& cfg, const LaguerreBasis& basis, const PlantModel& plant,
                          ConstVectorRef x0) {
  return MpcSolver(cfg, plant, basis).solve(x0);
}

}  // namespace lagnmpc
