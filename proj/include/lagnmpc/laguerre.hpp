#pragma once

#include "lagnmpc/types.hpp"

namespace lagnmpc {

/// Builds the M x M state matrix of the discrete Laguerre network. Lower
/// triangular with alpha on the diagonal and (-alpha)^(i-j-1) * beta below it.
Matrix build_AL(double alpha, int size);

/// Discrete Laguerre basis over a prediction horizon.
///
/// Row i of matrix() is L_i^T. Rows are produced by iterating
/// L_{i+1} = A_L L_i from L_0 = sqrt(beta) [1, -alpha, alpha^2, ...]^T.
/// Immutable after construction.
class LaguerreBasis {
 public:
  LaguerreBasis(double alpha, int size, int horizon);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  int size() const { return size_; }
  int horizon() const { return horizon_; }

  /// N x M basis matrix.
  const Matrix& matrix() const { return basis_; }
  /// L_i as a column vector of length M.
  Vector row(int i) const { return basis_.row(i).transpose(); }

 private:
  double alpha_;
  double beta_;
  int size_;
  int horizon_;
  Matrix basis_;
};

inline LaguerreBasis laguerre_basis(double alpha, int size, int horizon) {
  return LaguerreBasis(alpha, size, horizon);
}

/// U = L eta + u_ss 1_N.
Vector reconstruct_sequence(const LaguerreBasis& basis, ConstVectorRef eta, double u_ss);

/// u_0 = L_0^T eta + u_ss.
double first_input(const LaguerreBasis& basis, ConstVectorRef eta, double u_ss);

}  // namespace lagnmpc
