#pragma once

#include "lagnmpc/io.hpp"
#include "lagnmpc/mpc.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace lagnmpc {

/// Base-p digit reversal of n across the radix point, in [0, 1).
double radical_inverse(std::uint32_t base, std::uint64_t n);

/// First d primes by trial division.
std::vector<std::uint32_t> first_primes(int d);

/// Point n of the d-dimensional Halton sequence.
Vector halton_point(int d, std::uint64_t n);

/// A state constraint set given by axis-aligned bounds and an optional
/// membership predicate (empty predicate means the set is the box itself).
struct StateRegion {
  BoxSet bounds;
  std::function<bool(ConstVectorRef)> predicate;

  static StateRegion box(BoxSet b) { return {std::move(b), {}}; }
  bool contains(ConstVectorRef x) const;
};

/// Tightest axis-aligned hypercube containing the region.
BoxSet bounding_box(const StateRegion& region);

/// First `count` Halton points (index from 1) that, mapped affinely onto the
/// bounding box, fall inside the region. Throws std::runtime_error when
/// `max_candidates` indices are exhausted first. `candidates`, when given,
/// receives the number of Halton indices consumed.
std::vector<Vector> halton_sample_states(const StateRegion& region, std::size_t count,
                                         std::size_t max_candidates = 0, std::size_t* candidates = nullptr);

struct DatasetRecord {
  Vector x;
  double u_star = 0.0;
  Vector U_star;
  Vector eta_star;  // empty for plain NMPC
  double cost = 0.0;
  SolveStatus status = SolveStatus::Converged;
};

struct Dataset {
  Formulation formulation = Formulation::LagNmpc;
  int horizon = 0;
  int laguerre_size = 0;
  std::size_t requested = 0;  // N_d
  std::size_t dropped_infeasible = 0;
  std::size_t dropped_unconverged = 0;
  std::vector<DatasetRecord> records;

  std::size_t retained() const { return records.size(); }  // N_s
};

/// Solves one MPC problem per state with a pool of per-thread solvers.
/// Result i always belongs to states[i]. `basis` selects the Laguerre problem.
std::vector<SolveResult> solve_states(const MpcConfig& cfg, const PlantModel& plant,
                                      const LaguerreBasis* basis, const std::vector<Vector>& states);
/// Single-threaded reference for solve_states.
std::vector<SolveResult> solve_states_serial(const MpcConfig& cfg, const PlantModel& plant,
                                             const LaguerreBasis* basis,
                                             const std::vector<Vector>& states);

/// Keeps the converged solves. Throws std::runtime_error when nothing is retained.
Dataset assemble_dataset(const MpcConfig& cfg, Formulation formulation,
                         const std::vector<Vector>& states, const std::vector<SolveResult>& results);

Dataset generate_dataset(const MpcConfig& cfg, const PlantModel& plant, const LaguerreBasis* basis,
                         const std::vector<Vector>& states);

void write_dataset(std::ostream& out, const Dataset& data, const FileHeader& provenance = {});
Dataset read_dataset(std::istream& in);

}  // namespace lagnmpc
