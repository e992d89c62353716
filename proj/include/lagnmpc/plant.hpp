#pragma once

#include "lagnmpc/types.hpp"

namespace lagnmpc {

/// Discrete-time single-input plant x+ = f(x, u).
///
/// Implementations must be deterministic and total. The input gradient is
/// optional; loss terms that differentiate through the plant check
/// has_input_gradient() first. state_jacobian() defaults to central
/// differences of step().
class PlantModel {
 public:
  virtual ~PlantModel() = default;

  virtual int state_dim() const = 0;
  virtual void step(ConstVectorRef x, double u, VectorRef next) const = 0;

  virtual bool has_input_gradient() const { return false; }
  /// df/du at (x, u), written into grad (length state_dim()).
  virtual void input_gradient(ConstVectorRef x, double u, VectorRef grad) const;
  /// df/dx at (x, u), written into jac (state_dim() x state_dim()).
  virtual void state_jacobian(ConstVectorRef x, double u, MatrixRef jac) const;

  Vector next_state(ConstVectorRef x, double u) const;
};

/// Averaged buck-boost converter parameters. Defaults are the experimental setup.
struct BuckBoostParams {
  double sampling_time = 1e-4;  // Ts [s]
  double input_voltage = 15.0;  // Vin [V]
  double inductance = 4.2e-3;   // L [H]
  double capacitance = 2.2e-3;  // C [F]
  double load = 165.0;          // R [Ohm]

  void validate() const;
};

struct SteadyState {
  double x1;  // inductor current
  double x2;  // capacitor voltage
  double u;   // duty cycle

  Vector state() const;
};

/// State box [0.01, 2] x [-20, 0] and input box [0.1, 0.9].
BoxSet default_state_box();
BoxSet default_input_box();

Eigen::Vector2d buckboost_step(const BuckBoostParams& p, const Eigen::Vector2d& x, double u);
/// df/du, which does not depend on u because the model is control affine.
Eigen::Vector2d buckboost_input_gradient(const BuckBoostParams& p, const Eigen::Vector2d& x);
/// Equilibrium for a capacitor-voltage reference. Throws std::domain_error
/// when the reference equals the input voltage.
SteadyState steady_state(const BuckBoostParams& p, double x2_ss);

class BuckBoostPlant final : public PlantModel {
 public:
  explicit BuckBoostPlant(BuckBoostParams params = {});

  const BuckBoostParams& params() const { return params_; }

  int state_dim() const override { return 2; }
  void step(ConstVectorRef x, double u, VectorRef next) const override;
  bool has_input_gradient() const override { return true; }
  void input_gradient(ConstVectorRef x, double u, VectorRef grad) const override;
  void state_jacobian(ConstVectorRef x, double u, MatrixRef jac) const override;

 private:
  BuckBoostParams params_;
};

}  // namespace lagnmpc
