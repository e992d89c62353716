#include "lagnmpc/sampling.hpp"

#include "lagnmpc/parallel.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lagnmpc {

double radical_inverse(std::uint32_t base, std::uint64_t n) {
  if (base < 2) throw std::invalid_argument("radical inverse base must be at least 2");
  if (n >= (std::uint64_t{1} << 53)) throw std::invalid_argument("Halton index too large");
  // Exact integer digit reversal, a single rounding at the end.
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;
  while (n > 0) {
    numerator = numerator * base + n % base;
    denominator *= base;
    n /= base;
  }
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

std::vector<std::uint32_t> first_primes(int d) {
  std::vector<std::uint32_t> primes;
  for (std::uint32_t candidate = 2; static_cast<int>(primes.size()) < d; ++candidate) {
    bool prime = true;
    for (std::uint32_t p : primes) {
      if (p * p > candidate) break;
      if (candidate % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(candidate);
  }
  return primes;
}

Vector halton_point(int d, std::uint64_t n) {
  if (d < 1) throw std::invalid_argument("Halton dimension must be at least 1");
  const auto primes = first_primes(d);
  Vector h(d);
  for (int j = 0; j < d; ++j) h(j) = radical_inverse(primes[j], n);
  return h;
}

bool StateRegion::contains(ConstVectorRef x) const {
  return bounds.contains(x) && (!predicate || predicate(x));
}

BoxSet bounding_box(const StateRegion& region) {
  const BoxSet& b = region.bounds;
  if (b.dim() == 0) throw std::invalid_argument("state region has no bounds");
  if (!b.bounded()) throw std::invalid_argument("state region is unbounded");
  if (b.has_empty_interval()) throw std::invalid_argument("state region has an empty interval");
  return b;
}

std::vector<Vector> halton_sample_states(const StateRegion& region, std::size_t count,
                                         std::size_t max_candidates, std::size_t* candidates) {
  if (count < 1) throw std::invalid_argument("at least one sample must be requested");
  const BoxSet box = bounding_box(region);
  const int d = box.dim();
  const auto primes = first_primes(d);
  const Vector width = box.upper - box.lower;
  if (max_candidates == 0) max_candidates = 1000 * count + 100000;

  std::vector<Vector> states;
  states.reserve(count);
  std::uint64_t index = 1;  // index 0 maps onto the box corner
  Vector x(d);
  while (states.size() < count) {
    // One block requests exactly the number of points still missing.
    const std::size_t block = count - states.size();
    if (index - 1 + block > max_candidates) {
      throw std::runtime_error("Halton sampling exhausted " + std::to_string(max_candidates) +
                               " candidates; the region may have zero measure");
    }
    for (std::size_t k = 0; k < block; ++k, ++index) {
      for (int j = 0; j < d; ++j) x(j) = box.lower(j) + radical_inverse(primes[j], index) * width(j);
      if (region.contains(x)) states.push_back(x);
    }
  }
  if (candidates) *candidates = static_cast<std::size_t>(index - 1);
  return states;
}

namespace {

void check_states(const MpcConfig& cfg, const std::vector<Vector>& states) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!cfg.state_box.contains(states[i])) {
      throw std::domain_error("state " + std::to_string(i) + " lies outside the state constraint set");
    }
  }
}

MpcSolver make_solver(const MpcConfig& cfg, const PlantModel& plant, const LaguerreBasis* basis) {
  return basis ? MpcSolver(cfg, plant, *basis) : MpcSolver(cfg, plant);
}

}  // namespace

std::vector<SolveResult> solve_states(const MpcConfig& cfg, const PlantModel& plant,
                                      const LaguerreBasis* basis, const std::vector<Vector>& states) {
  check_states(cfg, states);
  std::vector<SolveResult> results(states.size());
  const auto n = static_cast<std::int64_t>(states.size());
  omp::ExceptionSlot error;
#pragma omp parallel
  {
    std::optional<MpcSolver> solver;
    error.run([&] { solver.emplace(make_solver(cfg, plant, basis)); });
#pragma omp for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < n; ++i) {
      if (solver) error.run([&] { results[i] = solver->solve(states[i]); });
    }
  }
  error.rethrow();
  return results;
}

std::vector<SolveResult> solve_states_serial(const MpcConfig& cfg, const PlantModel& plant,
                                             const LaguerreBasis* basis,
                                             const std::vector<Vector>& states) {
  check_states(cfg, states);
  MpcSolver solver = make_solver(cfg, plant, basis);
  std::vector<SolveResult> results;
  results.reserve(states.size());
  for (const auto& x : states) results.push_back(solver.solve(x));
  return results;
}

Dataset assemble_dataset(const MpcConfig& cfg, Formulation formulation,
                         const std::vector<Vector>& states, const std::vector<SolveResult>& results) {
  if (states.size() != results.size()) throw std::invalid_argument("states and results differ in count");
  Dataset data;
  data.formulation = formulation;
  data.horizon = cfg.horizon;
  data.laguerre_size = formulation == Formulation::LagNmpc ? cfg.laguerre_size : 0;
  data.requested = states.size();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const SolveResult& r = results[i];
    if (r.status == SolveStatus::Infeasible) {
      ++data.dropped_infeasible;
      continue;
    }
    if (r.status != SolveStatus::Converged) {
      ++data.dropped_unconverged;
      continue;
    }
    data.records.push_back({states[i], r.first_input(), r.sequence, r.coefficients, r.cost, r.status});
  }
  if (data.records.empty()) throw std::runtime_error("no sampled state produced a converged solution");
  return data;
}

Dataset generate_dataset(const MpcConfig& cfg, const PlantModel& plant, const LaguerreBasis* basis,
                         const std::vector<Vector>& states) {
  const auto results = solve_states(cfg, plant, basis, states);
  return assemble_dataset(cfg, basis ? Formulation::LagNmpc : Formulation::Nmpc, states, results);
}

void write_dataset(std::ostream& out, const Dataset& data, const FileHeader& provenance) {
  FileHeader header = provenance;
  header.entries["formulation"] = std::string(to_string(data.formulation));
  header.entries["horizon"] = std::to_string(data.horizon);
  header.entries["laguerre_size"] = std::to_string(data.laguerre_size);
  header.entries["requested"] = std::to_string(data.requested);
  header.entries["retained"] = std::to_string(data.retained());
  header.entries["dropped_infeasible"] = std::to_string(data.dropped_infeasible);
  header.entries["dropped_unconverged"] = std::to_string(data.dropped_unconverged);
  write_header(out, "dataset", header);

  const int nx = data.records.empty() ? 2 : static_cast<int>(data.records.front().x.size());
  for (int j = 0; j < nx; ++j) out << 'x' << j + 1 << ',';
  out << "u_star";
  for (int i = 0; i < data.horizon; ++i) out << ",U_star_" << i;
  for (int i = 0; i < data.laguerre_size; ++i) out << ",eta_star_" << i;
  out << ",cost,status\n";

  for (const auto& r : data.records) {
    for (int j = 0; j < nx; ++j) out << format_double(r.x(j)) << ',';
    out << format_double(r.u_star);
    for (int i = 0; i < data.horizon; ++i) out << ',' << format_double(r.U_star(i));
    for (int i = 0; i < data.laguerre_size; ++i) out << ',' << format_double(r.eta_star(i));
    out << ',' << format_double(r.cost) << ',' << to_string(r.status) << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  const FileHeader header = read_header(in);
  Dataset data;
  data.formulation = parse_formulation(header.at("formulation"));
  data.horizon = std::stoi(header.at("horizon"));
  data.laguerre_size = std::stoi(header.at("laguerre_size"));
  data.requested = std::stoull(header.at("requested"));
  if (header.has("dropped_infeasible")) data.dropped_infeasible = std::stoull(header.at("dropped_infeasible"));
  if (header.has("dropped_unconverged")) data.dropped_unconverged = std::stoull(header.at("dropped_unconverged"));

  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("dataset file lacks a column header");
  const auto columns = split(line, ',');
  int nx = 0;
  while (nx < static_cast<int>(columns.size()) && columns[nx] == "x" + std::to_string(nx + 1)) ++nx;
  const std::size_t expected = nx + 1 + data.horizon + data.laguerre_size + 2;
  if (nx == 0 || columns.size() != expected) throw std::invalid_argument("dataset column header is malformed");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != expected) throw std::invalid_argument("dataset row has the wrong number of fields");
    DatasetRecord r;
    std::size_t c = 0;
    r.x.resize(nx);
    for (int j = 0; j < nx; ++j) r.x(j) = parse_double(f[c++]);
    r.u_star = parse_double(f[c++]);
    r.U_star.resize(data.horizon);
    for (int i = 0; i < data.horizon; ++i) r.U_star(i) = parse_double(f[c++]);
    r.eta_star.resize(data.laguerre_size);
    for (int i = 0; i < data.laguerre_size; ++i) r.eta_star(i) = parse_double(f[c++]);
    r.cost = parse_double(f[c++]);
    std::string status = f[c];
    if (!status.empty() && status.back() == '\r') status.pop_back();
    r.status = parse_solve_status(status);
    data.records.push_back(std::move(r));
  }
  return data;
}

}  // namespace lagnmpc
