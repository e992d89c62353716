#pragma once

#include "lagnmpc/io.hpp"
#include "lagnmpc/laguerre.hpp"
#include "lagnmpc/mpc.hpp"
#include "lagnmpc/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lagnmpc {

struct MlpArchitecture {
  int input_dim = 2;
  int hidden_layers = 2;
  int hidden_nodes = 20;
  int output_dim = 1;  // 1 for the NMPC head, M for the Laguerre head

  bool operator==(const MlpArchitecture&) const = default;
};

struct DenseLayer {
  Matrix weight;
  Vector bias;
};

struct BatchNorm {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
};

/// Hidden layers are affine -> batch norm -> ReLU; the output layer is affine.
struct MlpParams {
  MlpArchitecture arch;
  std::vector<DenseLayer> hidden;
  std::vector<BatchNorm> norms;
  DenseLayer output;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;
};

/// He-style uniform init: weights in +-sqrt(6 / fan_in), biases in
/// +-1/sqrt(fan_in). The output bias is set to `output_bias`.
MlpParams init_mlp(const MlpArchitecture& arch, std::uint64_t seed, double output_bias = 0.0);

/// Same shapes, every trainable entry and running statistic zero.
MlpParams zeros_like(const MlpParams& params);

/// A contiguous block of trainable parameters.
template <class T>
struct BasicParamView {
  std::string name;
  std::span<T> values;
  bool decayed;  // weight decay applies to affine weights and biases only
};
using ParamView = BasicParamView<double>;
using ConstParamView = BasicParamView<const double>;

std::vector<ParamView> trainable_parameters(MlpParams& params);
std::vector<ConstParamView> trainable_parameters(const MlpParams& params);

enum class Mode { Train, Infer };

struct InputBounds {
  double lower = 0.1;
  double upper = 0.9;
};

/// r_c(xi) = min(max(xi, lower), upper), elementwise.
double clamp(double xi, double lower, double upper);
Vector clamp(ConstVectorRef xi, double lower, double upper);
/// Subgradient of the clamp: 1 on [lower, upper] including the end points, 0 outside.
double clamp_derivative(double xi, double lower, double upper);

/// Fixed affine layer U = L eta + U_ss; never trained.
struct LaguerreHead {
  Matrix L;
  double u_ss = 0.0;
  Vector U_ss;

  LaguerreHead(Matrix basis, double u_ss);
  LaguerreHead(const LaguerreBasis& basis, double u_ss) : LaguerreHead(basis.matrix(), u_ss) {}

  int horizon() const { return static_cast<int>(L.rows()); }
  int size() const { return static_cast<int>(L.cols()); }
};

/// Activations kept by a forward pass for backward().
struct ForwardCache {
  Mode mode = Mode::Train;
  std::vector<Matrix> layer_inputs;  // input of each hidden layer, then of the output layer
  std::vector<Matrix> normalized;    // x_hat per hidden layer
  std::vector<Matrix> activations;   // pre-ReLU y per hidden layer
  std::vector<Vector> batch_mean;
  std::vector<Vector> batch_var;     // biased
  std::vector<Vector> inv_std;
  bool valid = false;
};

/// Raw network output (output_dim x batch) before any head or clamp.
/// Columns of `inputs` are samples. Train mode normalizes with batch statistics.
Matrix forward_trunk(const MlpParams& params, const Matrix& inputs, Mode mode,
                     ForwardCache* cache = nullptr);

double forward_nmpc(const MlpParams& params, const InputBounds& bounds, ConstVectorRef x, Mode mode);
Vector forward_lagnmpc(const MlpParams& params, const LaguerreHead& head, const InputBounds& bounds,
                       ConstVectorRef x, Mode mode);
double forward_lagnmpc_first(const MlpParams& params, const LaguerreHead& head,
                             const InputBounds& bounds, ConstVectorRef x, Mode mode);

/// Reverse-mode gradient of a loss with respect to every trainable parameter,
/// given dLoss/dRaw for the batch of the cached forward pass.
MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_raw);

/// Exponential moving average of the cached batch statistics (unbiased variance).
void update_running_stats(MlpParams& params, const ForwardCache& cache);

struct AdamWOptions {
  double lr = 1e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW update of a flat parameter block at step t >= 1.
void adamw_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
                std::span<double> v, const AdamWOptions& opt, long t, bool decay);

class AdamW {
 public:
  AdamW(const MlpParams& shape, AdamWOptions options);

  void step(MlpParams& params, const MlpParams& grads);
  long steps() const { return t_; }

 private:
  AdamWOptions options_;
  MlpParams m_;
  MlpParams v_;
  long t_ = 0;
};

/// A trained controller network: trunk, clamp bounds, and the optional Laguerre head.
struct NeuralPolicy {
  Formulation formulation = Formulation::LagNmpc;
  MlpParams params;
  InputBounds bounds;
  std::optional<LaguerreHead> head;

  /// First input of the approximated law, inference mode.
  double evaluate(ConstVectorRef x) const;
  /// Full sequence for the Laguerre head, the single input otherwise.
  Vector evaluate_sequence(ConstVectorRef x) const;
  void validate() const;
};

/// Text weight file; all doubles written with 17 significant digits so a
/// round trip is bitwise exact.
void write_policy(std::ostream& out, const NeuralPolicy& policy, const FileHeader& provenance = {});
NeuralPolicy read_policy(std::istream& in);

}  // namespace lagnmpc
