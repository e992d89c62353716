#include "lagnmpc/mlp.hpp"

#include "lagnmpc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace lagnmpc {

void MlpParams::validate() const {
  if (arch.input_dim < 1 || arch.hidden_layers < 0 || arch.hidden_nodes < 1 || arch.output_dim < 1) {
    throw std::invalid_argument("invalid network architecture");
  }
  if (static_cast<int>(hidden.size()) != arch.hidden_layers ||
      static_cast<int>(norms.size()) != arch.hidden_layers) {
    throw std::invalid_argument("hidden layer count does not match the architecture");
  }
  int fan_in = arch.input_dim;
  for (int j = 0; j < arch.hidden_layers; ++j) {
    const auto& l = hidden[j];
    const auto& n = norms[j];
    const int w = arch.hidden_nodes;
    if (l.weight.rows() != w || l.weight.cols() != fan_in || l.bias.size() != w || n.gamma.size() != w ||
        n.beta.size() != w || n.running_mean.size() != w || n.running_var.size() != w) {
      throw std::invalid_argument("hidden layer " + std::to_string(j) + " has inconsistent shapes");
    }
    if ((n.running_var.array() < 0).any()) throw std::invalid_argument("negative running variance");
    fan_in = w;
  }
  if (output.weight.rows() != arch.output_dim || output.weight.cols() != fan_in ||
      output.bias.size() != arch.output_dim) {
    throw std::invalid_argument("output layer has inconsistent shapes");
  }
}

MlpParams init_mlp(const MlpArchitecture& arch, std::uint64_t seed, double output_bias) {
  MlpParams p;
  p.arch = arch;
  Rng rng(seed);
  auto dense = [&](int out, int in) {
    DenseLayer l;
    const double wb = std::sqrt(6.0 / in);
    const double bb = 1.0 / std::sqrt(static_cast<double>(in));
    l.weight.resize(out, in);
    for (int c = 0; c < in; ++c)
      for (int r = 0; r < out; ++r) l.weight(r, c) = rng.uniform(-wb, wb);
    l.bias.resize(out);
    for (int r = 0; r < out; ++r) l.bias(r) = rng.uniform(-bb, bb);
    return l;
  };
  int fan_in = arch.input_dim;
  for (int j = 0; j < arch.hidden_layers; ++j) {
    p.hidden.push_back(dense(arch.hidden_nodes, fan_in));
    const int w = arch.hidden_nodes;
    p.norms.push_back({Vector::Ones(w), Vector::Zero(w), Vector::Zero(w), Vector::Ones(w)});
    fan_in = w;
  }
  p.output = dense(arch.output_dim, fan_in);
  // The output layer starts small so the first clamp sees unsaturated values.
  p.output.weight *= 0.1;
  p.output.bias.setConstant(output_bias);
  return p;
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams z = params;
  for (auto& l : z.hidden) {
    l.weight.setZero();
    l.bias.setZero();
  }
  for (auto& n : z.norms) {
    n.gamma.setZero();
    n.beta.setZero();
    n.running_mean.setZero();
    n.running_var.setZero();
  }
  z.output.weight.setZero();
  z.output.bias.setZero();
  return z;
}

namespace {

template <class T, class P>
std::vector<BasicParamView<T>> views(P& params) {
  std::vector<BasicParamView<T>> out;
  auto add = [&](std::string name, auto& block, bool decayed) {
    out.push_back({std::move(name), std::span<T>(block.data(), static_cast<std::size_t>(block.size())), decayed});
  };
  for (std::size_t j = 0; j < params.hidden.size(); ++j) {
    const std::string i = std::to_string(j);
    add("hidden." + i + ".weight", params.hidden[j].weight, true);
    add("hidden." + i + ".bias", params.hidden[j].bias, true);
    add("norm." + i + ".gamma", params.norms[j].gamma, false);
    add("norm." + i + ".beta", params.norms[j].beta, false);
  }
  add("output.weight", params.output.weight, true);
  add("output.bias", params.output.bias, true);
  return out;
}

}  // namespace

std::vector<ParamView> trainable_parameters(MlpParams& params) { return views<double>(params); }
std::vector<ConstParamView> trainable_parameters(const MlpParams& params) {
  return views<const double>(params);
}

double clamp(double xi, double lower, double upper) {
  if (lower > upper) throw std::invalid_argument("clamp lower bound exceeds upper bound");
  return std::min(std::max(xi, lower), upper);
}

Vector clamp(ConstVectorRef xi, double lower, double upper) {
  if (lower > upper) throw std::invalid_argument("clamp lower bound exceeds upper bound");
  return xi.cwiseMax(lower).cwiseMin(upper);
}

double clamp_derivative(double xi, double lower, double upper) {
  return (xi >= lower && xi <= upper) ? 1.0 : 0.0;
}

LaguerreHead::LaguerreHead(Matrix basis, double u) : L(std::move(basis)), u_ss(u) {
  U_ss = Vector::Constant(L.rows(), u_ss);
}

Matrix forward_trunk(const MlpParams& params, const Matrix& inputs, Mode mode, ForwardCache* cache) {
  if (inputs.rows() != params.arch.input_dim) {
    throw std::invalid_argument("network input has " + std::to_string(inputs.rows()) +
                                " rows, expected " + std::to_string(params.arch.input_dim));
  }
  const auto batch = inputs.cols();
  if (cache) {
    *cache = ForwardCache{};
    cache->mode = mode;
  }

  Matrix a = inputs;
  for (std::size_t j = 0; j < params.hidden.size(); ++j) {
    const auto& layer = params.hidden[j];
    const auto& bn = params.norms[j];
    Matrix z = layer.weight * a;
    z.colwise() += layer.bias;

    Vector mean, var;
    if (mode == Mode::Train) {
      mean = z.rowwise().mean();
      var = (z.colwise() - mean).array().square().rowwise().mean();
    } else {
      mean = bn.running_mean;
      var = bn.running_var;
    }
    const Vector inv_std = (var.array() + params.bn_eps).rsqrt();
    Matrix xhat = (z.colwise() - mean).array().colwise() * inv_std.array();
    Matrix y = (xhat.array().colwise() * bn.gamma.array()).colwise() + bn.beta.array();

    if (cache) {
      cache->layer_inputs.push_back(a);
      cache->normalized.push_back(xhat);
      cache->batch_mean.push_back(mean);
      cache->batch_var.push_back(var);
      cache->inv_std.push_back(inv_std);
    }
    a = y.cwiseMax(0.0);
    if (cache) cache->activations.push_back(std::move(y));
  }

  Matrix raw = params.output.weight * a;
  raw.colwise() += params.output.bias;
  if (cache) {
    cache->layer_inputs.push_back(std::move(a));
    cache->valid = batch > 0;
  }
  return raw;
}

namespace {

Matrix as_column(ConstVectorRef x) { return Matrix(x); }

void check_head(const MlpParams& params, const LaguerreHead& head) {
  if (params.arch.output_dim != head.size()) {
    throw std::invalid_argument("network output dimension does not match the Laguerre head");
  }
}

}  // namespace

double forward_nmpc(const MlpParams& params, const InputBounds& bounds, ConstVectorRef x, Mode mode) {
  if (params.arch.output_dim != 1) throw std::invalid_argument("NMPC head needs a scalar network output");
  const Matrix raw = forward_trunk(params, as_column(x), mode);
  return clamp(raw(0, 0), bounds.lower, bounds.upper);
}

Vector forward_lagnmpc(const MlpParams& params, const LaguerreHead& head, const InputBounds& bounds,
                       ConstVectorRef x, Mode mode) {
  check_head(params, head);
  const Matrix raw = forward_trunk(params, as_column(x), mode);
  Vector u(head.horizon());
  for (int i = 0; i < head.horizon(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < head.size(); ++j) acc += head.L(i, j) * raw(j, 0);
    u(i) = clamp(acc + head.u_ss, bounds.lower, bounds.upper);
  }
  return u;
}

double forward_lagnmpc_first(const MlpParams& params, const LaguerreHead& head,
                             const InputBounds& bounds, ConstVectorRef x, Mode mode) {
  check_head(params, head);
  const Matrix raw = forward_trunk(params, as_column(x), mode);
  double acc = 0.0;
  for (int j = 0; j < head.size(); ++j) acc += head.L(0, j) * raw(j, 0);
  return clamp(acc + head.u_ss, bounds.lower, bounds.upper);
}

MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_raw) {
  if (!cache.valid || cache.layer_inputs.size() != params.hidden.size() + 1) {
    throw std::logic_error("backward() needs the cache of a preceding forward pass");
  }
  const auto batch = cache.layer_inputs.back().cols();
  if (grad_raw.rows() != params.arch.output_dim || grad_raw.cols() != batch) {
    throw std::invalid_argument("output gradient does not match the cached batch");
  }

  MlpParams grads = zeros_like(params);
  grads.output.weight = grad_raw * cache.layer_inputs.back().transpose();
  grads.output.bias = grad_raw.rowwise().sum();
  Matrix da = params.output.weight.transpose() * grad_raw;

  const double n = static_cast<double>(batch);
  for (int j = static_cast<int>(params.hidden.size()) - 1; j >= 0; --j) {
    const Matrix& y = cache.activations[j];
    const Matrix& xhat = cache.normalized[j];
    const Vector& inv_std = cache.inv_std[j];
    const auto& bn = params.norms[j];

    const Matrix dy = (y.array() > 0.0).select(da, 0.0);
    grads.norms[j].beta = dy.rowwise().sum();
    grads.norms[j].gamma = (dy.array() * xhat.array()).rowwise().sum();
    const Matrix dxhat = dy.array().colwise() * bn.gamma.array();

    Matrix dz;
    if (cache.mode == Mode::Train) {
      const Vector sum_dxhat = dxhat.rowwise().sum();
      const Vector sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum();
      dz = ((n * dxhat).colwise() - sum_dxhat).array() - xhat.array().colwise() * sum_dxhat_xhat.array();
      dz = dz.array().colwise() * (inv_std.array() / n);
    } else {
      dz = dxhat.array().colwise() * inv_std.array();
    }

    grads.hidden[j].weight = dz * cache.layer_inputs[j].transpose();
    grads.hidden[j].bias = dz.rowwise().sum();
    da = params.hidden[j].weight.transpose() * dz;
  }
  return grads;
}

void update_running_stats(MlpParams& params, const ForwardCache& cache) {
  if (!cache.valid || cache.mode != Mode::Train) return;
  const auto batch = cache.layer_inputs.front().cols();
  const double correction = batch > 1 ? static_cast<double>(batch) / static_cast<double>(batch - 1) : 1.0;
  const double m = params.bn_momentum;
  for (std::size_t j = 0; j < params.norms.size(); ++j) {
    auto& bn = params.norms[j];
    bn.running_mean = (1.0 - m) * bn.running_mean + m * cache.batch_mean[j];
    bn.running_var = (1.0 - m) * bn.running_var + (m * correction) * cache.batch_var[j];
  }
}

void adamw_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
                std::span<double> v, const AdamWOptions& opt, long t, bool decay) {
  if (!(opt.lr > 0)) throw std::invalid_argument("learning rate must be positive");
  if (t < 1) throw std::invalid_argument("AdamW step counter starts at 1");
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw std::invalid_argument("AdamW buffers differ in size");
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (decay) params[i] -= opt.lr * opt.weight_decay * params[i];
    m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grads[i];
    v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
  }
}

AdamW::AdamW(const MlpParams& shape, AdamWOptions options)
    : options_(options), m_(zeros_like(shape)), v_(zeros_like(shape)) {
  if (!(options_.lr > 0)) throw std::invalid_argument("learning rate must be positive");
}

void AdamW::step(MlpParams& params, const MlpParams& grads) {
  ++t_;
  auto p = trainable_parameters(params);
  const auto g = trainable_parameters(grads);
  auto m = trainable_parameters(m_);
  auto v = trainable_parameters(v_);
  if (p.size() != g.size() || p.size() != m.size()) throw std::invalid_argument("gradient shape mismatch");
  for (std::size_t k = 0; k < p.size(); ++k) {
    adamw_step(p[k].values, g[k].values, m[k].values, v[k].values, options_, t_, p[k].decayed);
  }
}

double NeuralPolicy::evaluate(ConstVectorRef x) const {
  if (formulation == Formulation::Nmpc) return forward_nmpc(params, bounds, x, Mode::Infer);
  return forward_lagnmpc_first(params, *head, bounds, x, Mode::Infer);
}

Vector NeuralPolicy::evaluate_sequence(ConstVectorRef x) const {
  if (formulation == Formulation::Nmpc) return Vector::Constant(1, forward_nmpc(params, bounds, x, Mode::Infer));
  return forward_lagnmpc(params, *head, bounds, x, Mode::Infer);
}

void NeuralPolicy::validate() const {
  params.validate();
  if (!(bounds.lower <= bounds.upper)) throw std::invalid_argument("clamp bounds are inverted");
  if (formulation == Formulation::LagNmpc) {
    if (!head) throw std::invalid_argument("Laguerre policy lacks its head");
    if (head->size() != params.arch.output_dim) throw std::invalid_argument("head and network disagree on M");
  } else if (params.arch.output_dim != 1) {
    throw std::invalid_argument("NMPC policy must have a scalar output");
  }
}

// --- weight file -----------------------------------------------------------

namespace {

void write_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

Matrix read_tensor(std::istream& in, const std::string& expected) {
  std::string tag, name;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> tag >> name >> rows >> cols) || tag != "tensor") {
    throw std::invalid_argument("weight file: expected tensor '" + expected + "'");
  }
  if (name != expected) throw std::invalid_argument("weight file: expected '" + expected + "', found '" + name + "'");
  Matrix m(rows, cols);
  std::string token;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(in >> token)) throw std::invalid_argument("weight file: tensor '" + name + "' is truncated");
      m(r, c) = parse_double(token);
    }
  }
  return m;
}

Vector as_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

}  // namespace

void write_policy(std::ostream& out, const NeuralPolicy& policy, const FileHeader& provenance) {
  policy.validate();
  const MlpParams& p = policy.params;
  FileHeader header = provenance;
  header.entries["formulation"] = std::string(to_string(policy.formulation));
  header.entries["input_dim"] = std::to_string(p.arch.input_dim);
  header.entries["hidden_layers"] = std::to_string(p.arch.hidden_layers);
  header.entries["hidden_nodes"] = std::to_string(p.arch.hidden_nodes);
  header.entries["output_dim"] = std::to_string(p.arch.output_dim);
  header.entries["bn_eps"] = format_double(p.bn_eps);
  header.entries["bn_momentum"] = format_double(p.bn_momentum);
  header.entries["u_min"] = format_double(policy.bounds.lower);
  header.entries["u_max"] = format_double(policy.bounds.upper);
  write_header(out, "weights", header);

  for (std::size_t j = 0; j < p.hidden.size(); ++j) {
    const std::string i = std::to_string(j);
    write_tensor(out, "hidden." + i + ".weight", p.hidden[j].weight);
    write_tensor(out, "hidden." + i + ".bias", p.hidden[j].bias);
    write_tensor(out, "norm." + i + ".gamma", p.norms[j].gamma);
    write_tensor(out, "norm." + i + ".beta", p.norms[j].beta);
    write_tensor(out, "norm." + i + ".running_mean", p.norms[j].running_mean);
    write_tensor(out, "norm." + i + ".running_var", p.norms[j].running_var);
  }
  write_tensor(out, "output.weight", p.output.weight);
  write_tensor(out, "output.bias", p.output.bias);
  if (policy.head) {
    write_tensor(out, "head.L", policy.head->L);
    write_tensor(out, "head.u_ss", Matrix::Constant(1, 1, policy.head->u_ss));
  }
}

NeuralPolicy read_policy(std::istream& in) {
  const FileHeader header = read_header(in);
  NeuralPolicy policy;
  policy.formulation = parse_formulation(header.at("formulation"));
  MlpParams& p = policy.params;
  p.arch.input_dim = std::stoi(header.at("input_dim"));
  p.arch.hidden_layers = std::stoi(header.at("hidden_layers"));
  p.arch.hidden_nodes = std::stoi(header.at("hidden_nodes"));
  p.arch.output_dim = std::stoi(header.at("output_dim"));
  p.bn_eps = parse_double(header.at("bn_eps"));
  p.bn_momentum = parse_double(header.at("bn_momentum"));
  policy.bounds = {parse_double(header.at("u_min")), parse_double(header.at("u_max"))};

  for (int j = 0; j < p.arch.hidden_layers; ++j) {
    const std::string i = std::to_string(j);
    DenseLayer l;
    l.weight = read_tensor(in, "hidden." + i + ".weight");
    l.bias = as_vector(read_tensor(in, "hidden." + i + ".bias"));
    p.hidden.push_back(std::move(l));
    BatchNorm bn;
    bn.gamma = as_vector(read_tensor(in, "norm." + i + ".gamma"));
    bn.beta = as_vector(read_tensor(in, "norm." + i + ".beta"));
    bn.running_mean = as_vector(read_tensor(in, "norm." + i + ".running_mean"));
    bn.running_var = as_vector(read_tensor(in, "norm." + i + ".running_var"));
    p.norms.push_back(std::move(bn));
  }
  p.output.weight = read_tensor(in, "output.weight");
  p.output.bias = as_vector(read_tensor(in, "output.bias"));
  if (policy.formulation == Formulation::LagNmpc) {
    Matrix l = read_tensor(in, "head.L");
    const double u_ss = read_tensor(in, "head.u_ss")(0, 0);
    policy.head.emplace(std::move(l), u_ss);
  }
  policy.validate();
  return policy;
}

}  // namespace lagnmpc
