#include "lagnmpc/laguerre.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lagnmpc {

namespace {

void check_pole(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("Laguerre pole must lie in [0, 1), got " + std::to_string(alpha));
  }
}

void check_coefficients(const LaguerreBasis& basis, ConstVectorRef eta) {
  if (eta.size() != basis.size()) {
    throw std::invalid_argument("coefficient vector has length " + std::to_string(eta.size()) +
                                ", basis expects " + std::to_string(basis.size()));
  }
}

// Fixed summation order so first_input matches element 0 of the sequence bitwise.
double row_dot(const Matrix& l, int i, ConstVectorRef eta) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) acc += l(i, j) * eta(j);
  return acc;
}

}  // namespace

Matrix build_AL(double alpha, int size) {
  check_pole(alpha);
  if (size < 1) throw std::invalid_argument("Laguerre size must be at least 1");

  const double beta = 1.0 - alpha * alpha;
  Matrix a = Matrix::Zero(size, size);
  for (int i = 0; i < size; ++i) {
    a(i, i) = alpha;
    double factor = beta;
    for (int j = i - 1; j >= 0; --j) {
      a(i, j) = factor;
      factor *= -alpha;
    }
  }
  return a;
}

LaguerreBasis::LaguerreBasis(double alpha, int size, int horizon)
    : alpha_(alpha), beta_(1.0 - alpha * alpha), size_(size), horizon_(horizon) {
  check_pole(alpha);
  if (size < 1) throw std::invalid_argument("Laguerre size must be at least 1");
  if (horizon < size) {
    throw std::invalid_argument("Laguerre size " + std::to_string(size) +
                                " exceeds the horizon " + std::to_string(horizon));
  }

  const Matrix a = build_AL(alpha, size);
  Vector row(size);
  const double scale = std::sqrt(beta_);
  double power = 1.0;
  for (int j = 0; j < size; ++j) {
    row(j) = scale * power;
    power *= -alpha;
  }

  basis_.resize(horizon, size);
  for (int i = 0; i < horizon; ++i) {
    basis_.row(i) = row.transpose();
    row = a * row;
  }
}

Vector reconstruct_sequence(const LaguerreBasis& basis, ConstVectorRef eta, double u_ss) {
  check_coefficients(basis, eta);
  Vector u(basis.horizon());
  for (int i = 0; i < basis.horizon(); ++i) u(i) = row_dot(basis.matrix(), i, eta) + u_ss;
  return u;
}

double first_input(const LaguerreBasis& basis, ConstVectorRef eta, double u_ss) {
  check_coefficients(basis, eta);
  return row_dot(basis.matrix(), 0, eta) + u_ss;
}

}  // namespace lagnmpc
