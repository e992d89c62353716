#include "lagnmpc/fixed_point.hpp"

#include "lagnmpc/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace lagnmpc {

namespace {

constexpr std::int64_t kMax32 = std::numeric_limits<std::int32_t>::max();
constexpr std::int64_t kMin32 = std::numeric_limits<std::int32_t>::min();

std::int32_t saturate(std::int64_t v, bool& overflow) {
  if (v > kMax32) {
    overflow = true;
    return static_cast<std::int32_t>(kMax32);
  }
  if (v < kMin32) {
    overflow = true;
    return static_cast<std::int32_t>(kMin32);
  }
  return static_cast<std::int32_t>(v);
}

std::int64_t add_sat(std::int64_t a, std::int64_t b, bool& overflow) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) {
    overflow = true;
    return b > 0 ? std::numeric_limits<std::int64_t>::max() : std::numeric_limits<std::int64_t>::min();
  }
  return r;
}

}  // namespace

void FixedFormat::validate() const {
  if (frac_bits < 1 || frac_bits > 30) throw ConfigError("fractional bits must lie in [1, 30]");
}

double FixedFormat::quantum() const { return std::ldexp(1.0, -frac_bits); }
double FixedFormat::max_value() const { return static_cast<double>(kMax32) * quantum(); }
double FixedFormat::min_value() const { return static_cast<double>(kMin32) * quantum(); }

std::int32_t to_fixed(double v, const FixedFormat& fmt, const std::string& name) {
  fmt.validate();
  // nearbyint honours the default round-to-nearest-even mode.
  const double scaled = std::nearbyint(std::ldexp(v, fmt.frac_bits));
  if (!std::isfinite(v) || scaled > static_cast<double>(kMax32) || scaled < static_cast<double>(kMin32)) {
    throw FixedRangeError(name + " = " + format_double(v) + " is outside the representable range [" +
                          format_double(fmt.min_value()) + ", " + format_double(fmt.max_value()) + "]");
  }
  return static_cast<std::int32_t>(scaled);
}

double from_fixed(std::int32_t q, const FixedFormat& fmt) { return std::ldexp(static_cast<double>(q), -fmt.frac_bits); }

std::int64_t shift_round_even(std::int64_t v, int bits) {
  if (bits <= 0) return v;
  const std::int64_t q = v >> bits;  // floor
  const std::int64_t r = v - (q << bits);
  const std::int64_t half = std::int64_t{1} << (bits - 1);
  if (r > half || (r == half && (q & 1))) return q + 1;
  return q;
}

std::vector<DenseLayer> fold_batch_norm(const MlpParams& params) {
  params.validate();
  std::vector<DenseLayer> folded;
  for (std::size_t j = 0; j < params.hidden.size(); ++j) {
    const auto& l = params.hidden[j];
    const auto& bn = params.norms[j];
    if (!bn.running_mean.allFinite() || !bn.running_var.allFinite()) {
      throw std::invalid_argument("batch norm statistics of layer " + std::to_string(j) + " are not finite");
    }
    const Vector scale = bn.gamma.array() * (bn.running_var.array() + params.bn_eps).rsqrt();
    DenseLayer f;
    f.weight = scale.asDiagonal() * l.weight;
    f.bias = scale.array() * (l.bias - bn.running_mean).array() + bn.beta.array();
    folded.push_back(std::move(f));
  }
  return folded;
}

Vector forward_folded(const std::vector<DenseLayer>& hidden, const DenseLayer& output, ConstVectorRef x) {
  Vector a = x;
  for (const auto& l : hidden) a = (l.weight * a + l.bias).cwiseMax(0.0);
  return output.weight * a + output.bias;
}

QuantizedNet quantize_net(const NeuralPolicy& policy, const FixedFormat& fmt) {
  fmt.validate();
  policy.validate();
  QuantizedNet q;
  q.fmt = fmt;
  q.formulation = policy.formulation;

  auto track = [&](double v, std::int32_t stored, const std::string& name) {
    const double err = std::abs(from_fixed(stored, fmt) - v);
    if (err > q.max_error || q.max_error_parameter.empty()) {
      q.max_error = err;
      q.max_error_parameter = name;
    }
  };
  auto quantize_layer = [&](const DenseLayer& l, const std::string& name) {
    QuantizedLayer ql;
    ql.rows = static_cast<int>(l.weight.rows());
    ql.cols = static_cast<int>(l.weight.cols());
    for (int r = 0; r < ql.rows; ++r) {
      for (int c = 0; c < ql.cols; ++c) {
        const std::string id = name + ".weight[" + std::to_string(r) + "," + std::to_string(c) + "]";
        ql.weight.push_back(to_fixed(l.weight(r, c), fmt, id));
        track(l.weight(r, c), ql.weight.back(), id);
      }
    }
    for (int r = 0; r < ql.rows; ++r) {
      const std::string id = name + ".bias[" + std::to_string(r) + "]";
      ql.bias.push_back(to_fixed(l.bias(r), fmt, id));
      track(l.bias(r), ql.bias.back(), id);
    }
    return ql;
  };

  const auto folded = fold_batch_norm(policy.params);
  for (std::size_t j = 0; j < folded.size(); ++j) q.hidden.push_back(quantize_layer(folded[j], "hidden." + std::to_string(j)));
  q.output = quantize_layer(policy.params.output, "output");

  if (policy.head) {
    for (int j = 0; j < policy.head->size(); ++j) {
      const std::string id = "head.L[0," + std::to_string(j) + "]";
      q.head_row.push_back(to_fixed(policy.head->L(0, j), fmt, id));
      track(policy.head->L(0, j), q.head_row.back(), id);
    }
    q.head_u_ss = to_fixed(policy.head->u_ss, fmt, "head.u_ss");
    track(policy.head->u_ss, q.head_u_ss, "head.u_ss");
  }

  // Bounds move inward to the grid so the hard input guarantee survives.
  const double lo = std::ceil(std::ldexp(policy.bounds.lower, fmt.frac_bits));
  const double hi = std::floor(std::ldexp(policy.bounds.upper, fmt.frac_bits));
  if (lo > static_cast<double>(kMax32) || hi < static_cast<double>(kMin32) || lo > hi) {
    throw FixedRangeError("clamp bounds are not representable with " + std::to_string(fmt.frac_bits) +
                          " fractional bits");
  }
  q.u_min = static_cast<std::int32_t>(lo);
  q.u_max = static_cast<std::int32_t>(hi);
  return q;
}

FixedOutput forward_fixed(const QuantizedNet& net, ConstVectorRef x) {
  const int F = net.fmt.frac_bits;
  FixedOutput out;
  bool& overflow = out.overflow;

  // Activations stay in 32-bit words; at most 64 units per layer on the stack.
  constexpr int kMaxWidth = 64;
  std::int32_t buf_a[kMaxWidth];
  std::int32_t buf_b[kMaxWidth];
  std::int32_t* a = buf_a;
  std::int32_t* next = buf_b;
  const int in_dim = static_cast<int>(x.size());
  if (in_dim > kMaxWidth) throw std::invalid_argument("input too wide for the fixed-point engine");
  for (int i = 0; i < in_dim; ++i) {
    const double scaled = std::nearbyint(std::ldexp(x(i), F));
    if (scaled > static_cast<double>(kMax32) || scaled < static_cast<double>(kMin32) || std::isnan(scaled)) {
      overflow = true;
      a[i] = scaled > 0 ? static_cast<std::int32_t>(kMax32) : static_cast<std::int32_t>(kMin32);
    } else {
      a[i] = static_cast<std::int32_t>(scaled);
    }
  }

  auto affine = [&](const QuantizedLayer& l, bool relu) {
    if (l.rows > kMaxWidth) throw std::invalid_argument("layer too wide for the fixed-point engine");
    for (int r = 0; r < l.rows; ++r) {
      std::int64_t acc = static_cast<std::int64_t>(l.bias[r]) * (std::int64_t{1} << F);
      const std::int32_t* w = l.weight.data() + static_cast<std::size_t>(r) * l.cols;
      for (int c = 0; c < l.cols; ++c) acc = add_sat(acc, static_cast<std::int64_t>(w[c]) * a[c], overflow);
      std::int32_t v = saturate(shift_round_even(acc, F), overflow);
      if (relu && v < 0) v = 0;
      next[r] = v;
    }
    std::swap(a, next);
  };

  for (const auto& l : net.hidden) affine(l, true);
  affine(net.output, false);

  std::int32_t s0 = a[0];
  if (!net.head_row.empty()) {
    std::int64_t acc = static_cast<std::int64_t>(net.head_u_ss) * (std::int64_t{1} << F);
    for (std::size_t j = 0; j < net.head_row.size(); ++j) {
      acc = add_sat(acc, static_cast<std::int64_t>(net.head_row[j]) * a[j], overflow);
    }
    s0 = saturate(shift_round_even(acc, F), overflow);
  }
  s0 = std::min(std::max(s0, net.u_min), net.u_max);
  out.u = from_fixed(s0, net.fmt);
  return out;
}

std::vector<FixedOutput> forward_fixed_batch(const QuantizedNet& net, const Matrix& states) {
  std::vector<FixedOutput> out(static_cast<std::size_t>(states.cols()));
  const auto n = static_cast<std::int64_t>(states.cols());
  omp::ExceptionSlot error;
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n; ++k) {
    error.run([&] { out[k] = forward_fixed(net, states.col(k)); });
  }
  error.rethrow();
  return out;
}

std::vector<FixedOutput> forward_fixed_batch_serial(const QuantizedNet& net, const Matrix& states) {
  std::vector<FixedOutput> out;
  out.reserve(static_cast<std::size_t>(states.cols()));
  for (Eigen::Index k = 0; k < states.cols(); ++k) out.push_back(forward_fixed(net, states.col(k)));
  return out;
}

namespace {

template <class F>
LatencyStats time_calls(const Matrix& samples, int repetitions, F&& infer) {
  if (repetitions < 100) throw std::invalid_argument("latency benchmark needs at least 100 repetitions");
  if (samples.cols() == 0) throw std::invalid_argument("latency benchmark needs samples");
  using clock = std::chrono::steady_clock;
  volatile double sink = 0.0;
  const int warmup = std::max(10, repetitions / 10);
  for (int r = 0; r < warmup; ++r) sink = sink + infer(samples.col(r % samples.cols()));

  std::vector<double> ns(static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    const Vector x = samples.col(r % samples.cols());
    const auto t0 = clock::now();
    const double u = infer(x);
    const auto t1 = clock::now();
    sink = sink + u;
    ns[r] = std::chrono::duration<double, std::nano>(t1 - t0).count();
  }
  std::sort(ns.begin(), ns.end());
  LatencyStats s;
  s.repetitions = repetitions;
  s.min_ns = ns.front();
  s.median_ns = ns.size() % 2 ? ns[ns.size() / 2] : 0.5 * (ns[ns.size() / 2 - 1] + ns[ns.size() / 2]);
  s.p99_ns = ns[std::min(ns.size() - 1, static_cast<std::size_t>(std::ceil(0.99 * ns.size())) - 1)];
  return s;
}

}  // namespace

LatencyStats bench_latency(const QuantizedNet& net, const Matrix& samples, int repetitions) {
  return time_calls(samples, repetitions, [&](const Vector& x) { return forward_fixed(net, x).u; });
}

LatencyStats bench_latency(const NeuralPolicy& policy, const Matrix& samples, int repetitions) {
  return time_calls(samples, repetitions, [&](const Vector& x) { return policy.evaluate(x); });
}

// --- file format -------------------------------------------------------------

namespace {

void write_ints(std::ostream& out, const std::string& name, int rows, int cols, const std::vector<std::int32_t>& v) {
  out << "qtensor " << name << ' ' << rows << ' ' << cols << '\n';
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) out << ' ';
      out << v[static_cast<std::size_t>(r) * cols + c];
    }
    out << '\n';
  }
}

std::vector<std::int32_t> read_ints(std::istream& in, const std::string& expected, int& rows, int& cols) {
  std::string tag, name;
  if (!(in >> tag >> name >> rows >> cols) || tag != "qtensor" || name != expected) {
    throw std::invalid_argument("quantized file: expected tensor '" + expected + "'");
  }
  if (rows < 0 || cols < 0) throw std::invalid_argument("quantized file: negative tensor shape");
  std::vector<std::int32_t> v(static_cast<std::size_t>(rows) * cols);
  for (auto& e : v) {
    long long t;
    if (!(in >> t) || t > kMax32 || t < kMin32) throw std::invalid_argument("quantized file: bad entry in " + name);
    e = static_cast<std::int32_t>(t);
  }
  return v;
}

void write_layer(std::ostream& out, const std::string& name, const QuantizedLayer& l) {
  write_ints(out, name + ".weight", l.rows, l.cols, l.weight);
  write_ints(out, name + ".bias", l.rows, 1, l.bias);
}

QuantizedLayer read_layer(std::istream& in, const std::string& name) {
  QuantizedLayer l;
  l.weight = read_ints(in, name + ".weight", l.rows, l.cols);
  int r = 0, c = 0;
  l.bias = read_ints(in, name + ".bias", r, c);
  if (r != l.rows || c != 1) throw std::invalid_argument("quantized file: bias shape of " + name);
  return l;
}

}  // namespace

void write_quantized(std::ostream& out, const QuantizedNet& net, const FileHeader& provenance) {
  FileHeader h = provenance;
  h.entries["word_bits"] = "32";
  h.entries["frac_bits"] = std::to_string(net.fmt.frac_bits);
  h.entries["formulation"] = std::string(to_string(net.formulation));
  h.entries["hidden_layers"] = std::to_string(net.hidden.size());
  h.entries["u_min"] = std::to_string(net.u_min);
  h.entries["u_max"] = std::to_string(net.u_max);
  h.entries["head_u_ss"] = std::to_string(net.head_u_ss);
  h.entries["max_quantization_error"] = format_double(net.max_error);
  h.entries["max_error_parameter"] = net.max_error_parameter;
  write_header(out, "quantized", h);
  for (std::size_t j = 0; j < net.hidden.size(); ++j) write_layer(out, "hidden." + std::to_string(j), net.hidden[j]);
  write_layer(out, "output", net.output);
  write_ints(out, "head.L0", 1, static_cast<int>(net.head_row.size()), net.head_row);
}

QuantizedNet read_quantized(std::istream& in) {
  const FileHeader h = read_header(in);
  if (h.at("word_bits") != "32") throw std::invalid_argument("quantized file: only 32-bit words are supported");
  QuantizedNet net;
  net.fmt.frac_bits = std::stoi(h.at("frac_bits"));
  net.fmt.validate();
  net.formulation = parse_formulation(h.at("formulation"));
  net.u_min = static_cast<std::int32_t>(std::stol(h.at("u_min")));
  net.u_max = static_cast<std::int32_t>(std::stol(h.at("u_max")));
  net.head_u_ss = static_cast<std::int32_t>(std::stol(h.at("head_u_ss")));
  if (h.has("max_quantization_error")) net.max_error = parse_double(h.at("max_quantization_error"));
  if (h.has("max_error_parameter")) net.max_error_parameter = h.at("max_error_parameter");
  const int layers = std::stoi(h.at("hidden_layers"));
  for (int j = 0; j < layers; ++j) net.hidden.push_back(read_layer(in, "hidden." + std::to_string(j)));
  net.output = read_layer(in, "output");
  int r = 0, c = 0;
  net.head_row = read_ints(in, "head.L0", r, c);
  if (!net.head_row.empty() && static_cast<int>(net.head_row.size()) != net.output.rows) {
    throw std::invalid_argument("quantized file: head does not match the output layer");
  }
  return net;
}

}  // namespace lagnmpc
