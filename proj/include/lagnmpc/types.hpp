#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace lagnmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<Eigen::VectorXd>;
using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;
using MatrixRef = Eigen::Ref<Eigen::MatrixXd>;

/// Raised for malformed configuration values; the CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned box {v : lower <= v <= upper}.
struct BoxSet {
  Vector lower;
  Vector upper;

  BoxSet() = default;
  BoxSet(Vector lo, Vector hi);
  /// Scalar box, used for the input set.
  static BoxSet interval(double lo, double hi);

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(ConstVectorRef v) const;
  /// Largest amount by which any coordinate leaves the box (0 inside).
  double violation(ConstVectorRef v) const;
  bool bounded() const;
  /// True when some interval is empty or degenerate (lower >= upper).
  bool has_empty_interval() const;
  void validate(const std::string& what) const;
};

}  // namespace lagnmpc
