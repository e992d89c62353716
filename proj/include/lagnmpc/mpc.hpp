#pragma once

#include "lagnmpc/laguerre.hpp"
#include "lagnmpc/plant.hpp"
#include "lagnmpc/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

namespace lagnmpc {

/// Which optimal control problem is solved or approximated.
enum class Formulation { Nmpc, LagNmpc };

std::string_view to_string(Formulation f);
Formulation parse_formulation(std::string_view s);

struct SolverOptions {
  double stationarity_tol = 1e-8;
  double constraint_tol = 1e-6;
  int max_iterations = 500;  // Newton iterations per start
  int multistarts = 5;
  std::uint64_t seed = 42;
};

/// Problem data shared by the NMPC and Laguerre NMPC formulations.
struct MpcConfig {
  int horizon = 20;
  Matrix Q;
  Matrix P;
  double R = 0.7;
  Vector x_ss;
  double u_ss = 0.0;
  BoxSet state_box;
  BoxSet input_box;
  int laguerre_size = 4;
  double laguerre_pole = 0.9;
  SolverOptions solver;

  /// Throws ConfigError on any broken invariant.
  void validate() const;
};

/// Experimental setup: N=20, Q=diag(1,0.1), R=0.7, P=diag(10,1), M=4,
/// alpha=0.9, equilibrium for a -10 V reference.
MpcConfig default_mpc_config(const BuckBoostParams& params = {}, double x2_ss = -10.0);

enum class SolveStatus { Converged, MaxIterations, Infeasible };

std::string_view to_string(SolveStatus s);
SolveStatus parse_solve_status(std::string_view s);

struct SolveResult {
  Vector sequence;      // U*, length N
  Vector coefficients;  // eta*, length M; empty for plain NMPC
  double cost = 0.0;
  SolveStatus status = SolveStatus::Infeasible;
  double max_violation = 0.0;
  int iterations = 0;   // summed over all starts
  int best_start = -1;

  double first_input() const { return sequence(0); }
};

/// States x_0..x_N as columns.
Matrix rollout(const PlantModel& plant, ConstVectorRef x0, ConstVectorRef inputs);

/// Terminal P-weighted term plus Q/R stage terms along the rollout.
double nmpc_cost(const MpcConfig& cfg, const PlantModel& plant, ConstVectorRef x0,
                 ConstVectorRef inputs);

/// Cost of the Laguerre parameterization; identical to nmpc_cost on L eta + U_ss.
double lagnmpc_cost(const MpcConfig& cfg, const LaguerreBasis& basis, const PlantModel& plant,
                    ConstVectorRef x0, ConstVectorRef eta);

/// Largest state or input constraint violation of a candidate sequence.
double constraint_violation(const MpcConfig& cfg, const PlantModel& plant, ConstVectorRef x0,
                            ConstVectorRef inputs);

/// Direct single-shooting solver.
///
/// Input bounds of plain NMPC are enforced by projection. State bounds, and the
/// input bounds of the Laguerre problem (linear in eta), go through a
/// Powell-Hestenes-Rockafellar augmented Lagrangian. The inner problem is a
/// projected Newton method with a finite-difference Hessian of the analytic
/// gradient. Each start is deterministic; the best feasible start wins.
///
/// Holds scratch buffers, so one instance must not be shared across threads.
class MpcSolver {
 public:
  /// Plain NMPC over U.
  MpcSolver(MpcConfig cfg, const PlantModel& plant);
  /// Laguerre NMPC over eta.
  MpcSolver(MpcConfig cfg, const PlantModel& plant, const LaguerreBasis& basis);
  ~MpcSolver();
  MpcSolver(MpcSolver&&) noexcept;
  MpcSolver& operator=(MpcSolver&&) noexcept;

  /// Throws std::domain_error when x0 lies outside the state box.
  SolveResult solve(ConstVectorRef x0);

  const MpcConfig& config() const;
  bool laguerre() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SolveResult solve_nmpc(const MpcConfig& cfg, const PlantModel& plant, ConstVectorRef x0);
SolveResult solve_lagnmpc(const MpcConfig& cfg, const LaguerreBasis& basis,
                          const PlantModel& plant, ConstVectorRef x0);

}  // namespace lagnmpc
