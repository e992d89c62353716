#pragma once

#include "lagnmpc/io.hpp"
#include "lagnmpc/mlp.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace lagnmpc {

/// Two's-complement 32-bit word with `frac_bits` fractional bits.
struct FixedFormat {
  int frac_bits = 16;

  void validate() const;
  double quantum() const;
  double max_value() const;  // (2^31 - 1) * quantum
  double min_value() const;  // -2^31 * quantum
};

/// Raised when a value cannot be represented; the message names the value.
class FixedRangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

/// Round to nearest, ties to even. Throws FixedRangeError when out of range.
std::int32_t to_fixed(double v, const FixedFormat& fmt, const std::string& name = "value");
double from_fixed(std::int32_t q, const FixedFormat& fmt);
/// Arithmetic right shift by `bits` with round-half-even.
std::int64_t shift_round_even(std::int64_t v, int bits);

/// Hidden layers with batch norm folded into the affine map (inference statistics).
std::vector<DenseLayer> fold_batch_norm(const MlpParams& params);
/// Float forward pass through folded layers; raw output before head and clamp.
Vector forward_folded(const std::vector<DenseLayer>& hidden, const DenseLayer& output, ConstVectorRef x);

struct QuantizedLayer {
  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> weight;  // row major
  std::vector<std::int32_t> bias;
};

struct QuantizedNet {
  FixedFormat fmt;
  Formulation formulation = Formulation::LagNmpc;
  std::vector<QuantizedLayer> hidden;
  QuantizedLayer output;
  std::vector<std::int32_t> head_row;  // first row of L; empty for the NMPC head
  std::int32_t head_u_ss = 0;
  std::int32_t u_min = 0;  // clamp bounds, tightened inward to the grid
  std::int32_t u_max = 0;
  double max_error = 0.0;  // largest |dequantized - folded| over all parameters
  std::string max_error_parameter;
};

QuantizedNet quantize_net(const NeuralPolicy& policy, const FixedFormat& fmt = {});

struct FixedOutput {
  double u = 0.0;
  bool overflow = false;  // some intermediate saturated
};

/// First input of the law in integer arithmetic.
FixedOutput forward_fixed(const QuantizedNet& net, ConstVectorRef x);

/// Batch inference over columns of `states`; overflow[k] set per sample.
std::vector<FixedOutput> forward_fixed_batch(const QuantizedNet& net, const Matrix& states);
std::vector<FixedOutput> forward_fixed_batch_serial(const QuantizedNet& net, const Matrix& states);

struct LatencyStats {
  double min_ns = 0.0;
  double median_ns = 0.0;
  double p99_ns = 0.0;
  int repetitions = 0;
};

/// Wall-clock time per single inference over `repetitions` timed calls after a
/// warmup; samples are visited cyclically in order.
LatencyStats bench_latency(const QuantizedNet& net, const Matrix& samples, int repetitions);
/// Same measurement for the double-precision policy.
LatencyStats bench_latency(const NeuralPolicy& policy, const Matrix& samples, int repetitions);

void write_quantized(std::ostream& out, const QuantizedNet& net, const FileHeader& provenance = {});
QuantizedNet read_quantized(std::istream& in);

}  // namespace lagnmpc
