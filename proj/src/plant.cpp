#include "lagnmpc/plant.hpp"

#include <cmath>
#include <stdexcept>

namespace lagnmpc {

void PlantModel::input_gradient(ConstVectorRef, double, VectorRef) const {
  throw std::logic_error("plant does not provide an input gradient");
}

void PlantModel::state_jacobian(ConstVectorRef x, double u, MatrixRef jac) const {
  const int n = state_dim();
  Vector xp = x, xm = x, fp(n), fm(n);
  for (int j = 0; j < n; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    step(xp, u, fp);
    step(xm, u, fm);
    jac.col(j) = (fp - fm) / (2.0 * h);
    xp(j) = x(j);
    xm(j) = x(j);
  }
}

Vector PlantModel::next_state(ConstVectorRef x, double u) const {
  Vector next(state_dim());
  step(x, u, next);
  return next;
}

void BuckBoostParams::validate() const {
  if (!(sampling_time > 0 && input_voltage > 0 && inductance > 0 && capacitance > 0 && load > 0)) {
    throw ConfigError("buck-boost parameters must all be strictly positive");
  }
}

Vector SteadyState::state() const {
  Vector x(2);
  x << x1, x2;
  return x;
}

BoxSet default_state_box() {
  Vector lo(2), hi(2);
  lo << 0.01, -20.0;
  hi << 2.0, 0.0;
  return BoxSet(lo, hi);
}

BoxSet default_input_box() { return BoxSet::interval(0.1, 0.9); }

Eigen::Vector2d buckboost_step(const BuckBoostParams& p, const Eigen::Vector2d& x, double u) {
  const double ts_l = p.sampling_time / p.inductance;
  const double ts_c = p.sampling_time / p.capacitance;
  const double ts_rc = p.sampling_time / (p.load * p.capacitance);
  return {x(0) + ts_l * x(1) + ts_l * (p.input_voltage - x(1)) * u,
          -ts_c * x(0) + (1.0 - ts_rc) * x(1) + ts_c * x(0) * u};
}

Eigen::Vector2d buckboost_input_gradient(const BuckBoostParams& p, const Eigen::Vector2d& x) {
  return {p.sampling_time / p.inductance * (p.input_voltage - x(1)),
          p.sampling_time / p.capacitance * x(0)};
}

SteadyState steady_state(const BuckBoostParams& p, double x2_ss) {
  if (x2_ss == p.input_voltage) {
    throw std::domain_error("steady state is singular for a reference equal to the input voltage");
  }
  const double u = x2_ss / (x2_ss - p.input_voltage);
  if (u == 1.0) throw std::domain_error("steady-state duty cycle of 1 is singular");
  return {x2_ss / (p.load * (u - 1.0)), x2_ss, u};
}

BuckBoostPlant::BuckBoostPlant(BuckBoostParams params) : params_(params) { params_.validate(); }

void BuckBoostPlant::step(ConstVectorRef x, double u, VectorRef next) const {
  next = buckboost_step(params_, Eigen::Vector2d(x(0), x(1)), u);
}

void BuckBoostPlant::input_gradient(ConstVectorRef x, double, VectorRef grad) const {
  grad = buckboost_input_gradient(params_, Eigen::Vector2d(x(0), x(1)));
}

void BuckBoostPlant::state_jacobian(ConstVectorRef, double u, MatrixRef jac) const {
  const auto& p = params_;
  const double ts_l = p.sampling_time / p.inductance;
  const double ts_c = p.sampling_time / p.capacitance;
  jac(0, 0) = 1.0;
  jac(0, 1) = ts_l * (1.0 - u);
  jac(1, 0) = -ts_c * (1.0 - u);
  jac(1, 1) = 1.0 - p.sampling_time / (p.load * p.capacitance);
}

}  // namespace lagnmpc
