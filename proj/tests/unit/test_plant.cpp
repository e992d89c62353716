#include "lagnmpc/plant.hpp"
#include "lagnmpc/rng.hpp"

#include <doctest.h>

using namespace lagnmpc;

TEST_CASE("buck-boost step") {
  const BuckBoostParams p;
  const Eigen::Vector2d a = buckboost_step(p, {0.0, 0.0}, 0.4);
  CHECK(a(0) == doctest::Approx(0.142857).epsilon(1e-6));
  CHECK(a(1) == 0.0);

  const Eigen::Vector2d b = buckboost_step(p, {0.101010, -10.0}, 0.4);
  CHECK(b(0) == doctest::Approx(0.101010).epsilon(1e-6));
  CHECK(b(1) == doctest::Approx(-10.0).epsilon(1e-6));

  const Eigen::Vector2d c = buckboost_step(p, {1.0, 0.0}, 0.0);
  CHECK(c(0) == 1.0);
  CHECK(c(1) == doctest::Approx(-0.045455).epsilon(1e-5));
}

TEST_CASE("input gradient") {
  const BuckBoostParams p;
  CHECK(buckboost_input_gradient(p, {0.0, 0.0})(0) == doctest::Approx(0.357143).epsilon(1e-6));
  CHECK(buckboost_input_gradient(p, {0.0, 0.0})(1) == 0.0);
  CHECK(buckboost_input_gradient(p, {0.0, 15.0}).isZero());
  const Eigen::Vector2d g = buckboost_input_gradient(p, {1.0, -10.0});
  CHECK(g(0) == doctest::Approx(0.595238).epsilon(1e-6));
  CHECK(g(1) == doctest::Approx(0.045455).epsilon(1e-5));

  const BuckBoostPlant plant(p);
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const Eigen::Vector2d x(rng.uniform(0.01, 2.0), rng.uniform(-20.0, 0.0));
    const double u = rng.uniform(0.1, 0.9), h = 1e-6;
    const Eigen::Vector2d fd = (buckboost_step(p, x, u + h) - buckboost_step(p, x, u - h)) / (2 * h);
    Vector grad(2);
    plant.input_gradient(x, u, grad);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(fd(i) - grad(i)) <= 1e-6 * std::max(std::abs(grad(i)), 1e-3));
  }
}

TEST_CASE("state jacobian matches finite differences") {
  const BuckBoostPlant plant;
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d x(rng.uniform(0.01, 2.0), rng.uniform(-20.0, 0.0));
    const double u = rng.uniform(0.1, 0.9), h = 1e-6;
    Matrix jac(2, 2);
    plant.state_jacobian(x, u, jac);
    for (int j = 0; j < 2; ++j) {
      Eigen::Vector2d e = Eigen::Vector2d::Zero();
      e(j) = h;
      const Vector fd = (plant.next_state(x + e, u) - plant.next_state(x - e, u)) / (2 * h);
      for (int i = 0; i < 2; ++i) CHECK(fd(i) == doctest::Approx(jac(i, j)).epsilon(1e-6));
    }
  }
}

TEST_CASE("control affinity") {
  const BuckBoostParams p;
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const Eigen::Vector2d x(rng.uniform(0.01, 2.0), rng.uniform(-20.0, 0.0));
    const double u1 = rng.uniform(0.0, 1.0), u2 = rng.uniform(0.0, 1.0), lam = rng.uniform();
    const Eigen::Vector2d lhs = buckboost_step(p, x, lam * u1 + (1 - lam) * u2);
    const Eigen::Vector2d rhs = lam * buckboost_step(p, x, u1) + (1 - lam) * buckboost_step(p, x, u2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("steady state") {
  const BuckBoostParams p;
  const SteadyState a = steady_state(p, -10.0);
  CHECK(a.u == 0.4);
  CHECK(std::abs(a.x1 - 0.101) <= 5e-4);
  const SteadyState o = steady_state(p, 0.0);
  CHECK(o.u == 0.0);
  CHECK(o.x1 == 0.0);
  const SteadyState b = steady_state(p, -5.0);
  CHECK(b.u == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(b.x1 == doctest::Approx(0.040404).epsilon(1e-5));
  CHECK_THROWS(steady_state(p, 15.0));

  for (double x2 : {-20.0, -12.5, -10.0, -5.0, -1.0, 0.0}) {
    const SteadyState s = steady_state(p, x2);
    const Eigen::Vector2d next = buckboost_step(p, {s.x1, s.x2}, s.u);
    CHECK(std::abs(next(0) - s.x1) <= 1e-10);
    CHECK(std::abs(next(1) - s.x2) <= 1e-10);
  }
}

TEST_CASE("parameters and boxes") {
  BuckBoostParams p;
  p.load = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  const BoxSet x = default_state_box();
  CHECK(x.contains(Eigen::Vector2d(0.01, -20.0)));
  CHECK(x.contains(Eigen::Vector2d(2.0, 0.0)));
  CHECK_FALSE(x.contains(Eigen::Vector2d(2.1, -1.0)));
  CHECK(x.violation(Eigen::Vector2d(2.5, -1.0)) == doctest::Approx(0.5));
  CHECK(default_input_box().lower(0) == 0.1);
  CHECK(default_input_box().upper(0) == 0.9);
  CHECK_THROWS(BoxSet(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)).validate("X"));
}
