#include "lagnmpc/laguerre.hpp"

#include <doctest.h>

#include <cmath>

using namespace lagnmpc;

namespace {

// Closed form of the discrete Laguerre functions, independent of the recursion:
// l_j(k) = sqrt(beta) * sum_i C(k,i) C(j,i) (-1)^i alpha^(k-i) beta^(j-i)... evaluated here
// through the z-domain product expansion by direct convolution.
double laguerre_reference(double alpha, int j, int k) {
  const double beta = 1.0 - alpha * alpha;
  // Impulse response of sqrt(beta)/(1 - a q^-1) * ((q^-1 - a)/(1 - a q^-1))^j, sample k.
  std::vector<double> h(static_cast<std::size_t>(k + 1), 0.0);
  for (int t = 0; t <= k; ++t) h[static_cast<std::size_t>(t)] = std::sqrt(beta) * std::pow(alpha, t);
  for (int stage = 0; stage < j; ++stage) {
    std::vector<double> g(h.size(), 0.0);
    // all-pass (q^-1 - a)/(1 - a q^-1): g_t = a g_{t-1} + h_{t-1} - a h_t
    for (std::size_t t = 0; t < h.size(); ++t) {
      const double prev_g = t > 0 ? g[t - 1] : 0.0;
      const double prev_h = t > 0 ? h[t - 1] : 0.0;
      g[t] = alpha * prev_g + prev_h - alpha * h[t];
    }
    h = g;
  }
  return h[static_cast<std::size_t>(k)];
}

}  // namespace

TEST_CASE("A_L closed form") {
  const Matrix a = build_AL(0.9, 3);
  const double expected[3][3] = {{0.9, 0, 0}, {0.19, 0.9, 0}, {-0.171, 0.19, 0.9}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(a(i, j) == doctest::Approx(expected[i][j]).epsilon(1e-12));

  const Matrix shift = build_AL(0.0, 3);
  Matrix s = Matrix::Zero(3, 3);
  s(1, 0) = 1;
  s(2, 1) = 1;
  CHECK(shift == s);

  const Matrix half = build_AL(0.5, 2);
  CHECK(half(0, 0) == 0.5);
  CHECK(half(1, 0) == doctest::Approx(0.75));
  CHECK(half(0, 1) == 0.0);
  CHECK(half(1, 1) == 0.5);
}

TEST_CASE("basis rows") {
  const LaguerreBasis identity(0.0, 4, 4);
  CHECK(identity.matrix() == Matrix::Identity(4, 4));

  const LaguerreBasis b(0.9, 4, 20);
  const double row0[] = {0.435890, -0.392301, 0.353071, -0.317764};
  for (int j = 0; j < 4; ++j) CHECK(b.matrix()(0, j) == doctest::Approx(row0[j]).epsilon(1e-6));

  for (int k = 0; k < 20; ++k)
    for (int j = 0; j < 4; ++j) CHECK(b.matrix()(k, j) == doctest::Approx(laguerre_reference(0.9, j, k)).epsilon(1e-10));
}

TEST_CASE("recursion and orthonormality") {
  for (double alpha : {0.0, 0.3, 0.9}) {
    const LaguerreBasis b(alpha, 5, 100);
    const Matrix a = build_AL(alpha, 5);
    for (int i = 0; i + 1 < 100; ++i) CHECK((b.row(i + 1) - a * b.row(i)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const LaguerreBasis b(0.9, 4, 2000);
  const Matrix g = b.matrix().transpose() * b.matrix();
  CHECK((g - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("sequence reconstruction") {
  const LaguerreBasis b(0.9, 4, 20);
  const Vector zeros = Vector::Zero(4);
  const Vector u = reconstruct_sequence(b, zeros, 0.4);
  CHECK(u.size() == 20);
  for (Eigen::Index i = 0; i < u.size(); ++i) CHECK(u(i) == 0.4);
  CHECK(first_input(b, zeros, 0.4) == 0.4);

  const LaguerreBasis id(0.0, 3, 3);
  const Vector eta = Eigen::Vector3d(0.2, -0.1, 0.7);
  CHECK(reconstruct_sequence(id, eta, 0.0) == eta);
  CHECK(first_input(id, eta, 0.0) == 0.2);

  const LaguerreBasis one(0.9, 1, 2);
  const Vector seq = reconstruct_sequence(one, Vector::Ones(1), 0.0);
  CHECK(seq(0) == doctest::Approx(0.435890).epsilon(1e-6));
  CHECK(seq(1) == doctest::Approx(0.392301).epsilon(1e-6));

  CHECK(first_input(b, Vector::Ones(4), 0.0) == doctest::Approx(0.078896).epsilon(1e-6));
  // first_input agrees with element 0 of the full sequence, bit for bit
  const Vector r = Eigen::Vector4d(0.3, -1.2, 0.8, 2.5);
  CHECK(first_input(b, r, 0.4) == reconstruct_sequence(b, r, 0.4)(0));
}

TEST_CASE("basis rejects invalid arguments") {
  CHECK_THROWS(LaguerreBasis(1.0, 4, 20));
  CHECK_THROWS(LaguerreBasis(-0.1, 4, 20));
  CHECK_THROWS(LaguerreBasis(0.5, 0, 20));
  CHECK_THROWS(LaguerreBasis(0.5, 4, 0));
}
