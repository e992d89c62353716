#include "lagnmpc/sampling.hpp"

#include <doctest.h>

#include <sstream>

using namespace lagnmpc;

namespace {

// Integer digit reversal: value = reversed / base^digits, one rounding at the end.
double radical_inverse_oracle(std::uint64_t base, std::uint64_t n) {
  std::uint64_t reversed = 0, denom = 1;
  while (n > 0) {
    reversed = reversed * base + n % base;
    denom *= base;
    n /= base;
  }
  return static_cast<double>(reversed) / static_cast<double>(denom);
}

}  // namespace

TEST_CASE("radical inverse") {
  CHECK(radical_inverse(2, 0) == 0.0);
  CHECK(radical_inverse(2, 3) == 0.75);
  CHECK(radical_inverse(3, 5) == doctest::Approx(7.0 / 9.0).epsilon(1e-15));
  for (std::uint32_t base : {2u, 3u, 5u, 7u})
    for (std::uint64_t n = 0; n < 5000; n += 7) CHECK(radical_inverse(base, n) == radical_inverse_oracle(base, n));
  CHECK_THROWS(radical_inverse(1, 3));
}

TEST_CASE("Halton points") {
  CHECK(first_primes(5) == std::vector<std::uint32_t>{2, 3, 5, 7, 11});
  const Vector a = halton_point(2, 1);
  CHECK(a(0) == 0.5);
  CHECK(a(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Vector b = halton_point(2, 2);
  CHECK(b(0) == 0.25);
  CHECK(b(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(halton_point(1, 4)(0) == 0.125);
  CHECK_THROWS(halton_point(0, 1));
}

TEST_CASE("bounding box") {
  const BoxSet x = default_state_box();
  const BoxSet b = bounding_box(StateRegion::box(x));
  CHECK(b.lower == x.lower);
  CHECK(b.upper == x.upper);
  StateRegion ball{BoxSet(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)),
                   [](ConstVectorRef v) { return v.squaredNorm() <= 1.0; }};
  CHECK(bounding_box(ball).upper == Eigen::Vector2d(1, 1));
  StateRegion empty{BoxSet(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)), {}};
  CHECK_THROWS(bounding_box(empty));
  StateRegion unbounded{BoxSet(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, INFINITY)), {}};
  CHECK_THROWS(bounding_box(unbounded));
}

TEST_CASE("state sampling") {
  const auto unit = halton_sample_states(StateRegion::box(BoxSet(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1))), 2);
  REQUIRE(unit.size() == 2);
  CHECK(unit[0](0) == 0.5);
  CHECK(unit[0](1) == doctest::Approx(1.0 / 3.0));
  CHECK(unit[1](0) == 0.25);
  CHECK(unit[1](1) == doctest::Approx(2.0 / 3.0));

  const auto one = halton_sample_states(StateRegion::box(default_state_box()), 1);
  CHECK(one[0](0) == doctest::Approx(1.005).epsilon(1e-12));
  CHECK(one[0](1) == doctest::Approx(-13.333333).epsilon(1e-7));

  StateRegion half{BoxSet(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)),
                   [](ConstVectorRef v) { return v(0) + v(1) <= 0; }};
  std::size_t candidates = 0;
  const auto kept = halton_sample_states(half, 100, 0, &candidates);
  CHECK(kept.size() == 100);
  CHECK(candidates > 100);
  for (const auto& v : kept) CHECK(v(0) + v(1) <= 0);

  StateRegion line{BoxSet(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)),
                   [](ConstVectorRef v) { return v(0) == v(1); }};
  CHECK_THROWS(halton_sample_states(line, 5, 10000));
  CHECK_THROWS(halton_sample_states(StateRegion::box(default_state_box()), 0));
}

TEST_CASE("sampling covers the box and is deterministic") {
  const BoxSet x = default_state_box();
  const auto s = halton_sample_states(StateRegion::box(x), 1000);
  int cells[4][4] = {};
  for (const auto& v : s) {
    CHECK(x.contains(v));
    const int i = std::min(3, static_cast<int>(4 * (v(0) - 0.01) / 1.99));
    const int j = std::min(3, static_cast<int>(4 * (v(1) + 20) / 20));
    ++cells[i][j];
  }
  for (auto& row : cells)
    for (int c : row) CHECK(c >= 1);
  CHECK(halton_sample_states(StateRegion::box(x), 1000) == s);
}

TEST_CASE("dataset assembly filters failed solves") {
  const MpcConfig cfg = default_mpc_config();
  std::vector<Vector> states{Eigen::Vector2d(0.2, -5.0), Eigen::Vector2d(0.3, -6.0), Eigen::Vector2d(0.4, -7.0)};
  std::vector<SolveResult> results(3);
  for (auto& r : results) {
    r.sequence = Vector::Constant(20, 0.5);
    r.coefficients = Vector::Zero(4);
    r.status = SolveStatus::Converged;
  }
  results[1].status = SolveStatus::Infeasible;
  const Dataset d = assemble_dataset(cfg, Formulation::LagNmpc, states, results);
  CHECK(d.requested == 3);
  CHECK(d.retained() == 2);
  CHECK(d.dropped_infeasible == 1);
  CHECK(d.records[1].x == states[2]);

  results[0].status = SolveStatus::MaxIterations;
  const Dataset e = assemble_dataset(cfg, Formulation::LagNmpc, states, results);
  CHECK(e.retained() == 1);
  CHECK(e.dropped_unconverged == 1);

  for (auto& r : results) r.status = SolveStatus::Infeasible;
  CHECK_THROWS(assemble_dataset(cfg, Formulation::LagNmpc, states, results));
}

TEST_CASE("dataset generation") {
  const MpcConfig cfg = default_mpc_config();
  const BuckBoostPlant plant;
  const LaguerreBasis basis(0.9, 4, 20);
  const Dataset eq = generate_dataset(cfg, plant, &basis, {cfg.x_ss});
  REQUIRE(eq.retained() == 1);
  CHECK(eq.records[0].u_star == doctest::Approx(0.4).epsilon(1e-4));
  CHECK(eq.records[0].eta_star.norm() <= 1e-4);

  const auto states = halton_sample_states(StateRegion::box(cfg.state_box), 24);
  const auto par = solve_states(cfg, plant, &basis, states);
  const auto ser = solve_states_serial(cfg, plant, &basis, states);
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].sequence == ser[i].sequence);
    CHECK(par[i].status == ser[i].status);
  }
  const Dataset d = assemble_dataset(cfg, Formulation::LagNmpc, states, par);
  CHECK(d.retained() <= 24);
  for (const auto& r : d.records) {
    CHECK(r.status == SolveStatus::Converged);
    CHECK(constraint_violation(cfg, plant, r.x, r.U_star) <= cfg.solver.constraint_tol);
    CHECK(r.u_star == r.U_star(0));
  }
  CHECK_THROWS_AS(solve_states(cfg, plant, &basis, {Eigen::Vector2d(5.0, 1.0)}), std::domain_error);

  std::stringstream io;
  FileHeader h;
  h.entries["seed"] = "42";
  write_dataset(io, d, h);
  const std::string text = io.str();
  const Dataset back = read_dataset(io);
  CHECK(back.retained() == d.retained());
  CHECK(back.requested == d.requested);
  for (std::size_t i = 0; i < d.retained(); ++i) {
    CHECK(back.records[i].x == d.records[i].x);
    CHECK(back.records[i].U_star == d.records[i].U_star);
    CHECK(back.records[i].eta_star == d.records[i].eta_star);
    CHECK(back.records[i].cost == d.records[i].cost);
  }
  std::stringstream again;
  write_dataset(again, back, h);
  CHECK(again.str() == text);
}
