#include "lagnmpc/fixed_point.hpp"
#include "lagnmpc/rng.hpp"
#include "lagnmpc/sampling.hpp"
#include "lagnmpc/verify.hpp"

#include <doctest.h>

#include <sstream>

using namespace lagnmpc;

namespace {

NeuralPolicy make_policy(Formulation f, std::uint64_t seed, double scale = 0.5) {
  NeuralPolicy p;
  p.formulation = f;
  p.params = random_mlp({2, 2, 20, f == Formulation::LagNmpc ? 4 : 1}, seed, scale);
  if (f == Formulation::LagNmpc) p.head = LaguerreHead(LaguerreBasis(0.9, 4, 20), 0.4);
  return p;
}

// Reference integer inference: exact 128-bit sums, floor-based half-even rescale.
std::int64_t rescale(__int128 acc, int f) {
  const __int128 one = __int128{1} << f;
  __int128 q = acc >= 0 ? acc / one : -((-acc + one - 1) / one);  // floor
  const __int128 r = acc - q * one;
  if (2 * r > one || (2 * r == one && (q & 1))) ++q;
  return static_cast<std::int64_t>(q);
}

double reference_fixed(const QuantizedNet& net, const Vector& x) {
  const int f = net.fmt.frac_bits;
  std::vector<std::int64_t> act;
  for (Eigen::Index i = 0; i < x.size(); ++i) act.push_back(std::llrint(x(i) * std::ldexp(1.0, f)));
  auto layer = [&](const QuantizedLayer& l, bool relu) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(l.rows));
    for (int r = 0; r < l.rows; ++r) {
      __int128 acc = static_cast<__int128>(l.bias[static_cast<std::size_t>(r)]) << f;
      for (int c = 0; c < l.cols; ++c)
        acc += static_cast<__int128>(l.weight[static_cast<std::size_t>(r * l.cols + c)]) * act[static_cast<std::size_t>(c)];
      std::int64_t v = rescale(acc, f);
      REQUIRE(v <= INT32_MAX);
      REQUIRE(v >= INT32_MIN);
      out[static_cast<std::size_t>(r)] = relu ? std::max<std::int64_t>(v, 0) : v;
    }
    act = out;
  };
  for (const auto& l : net.hidden) layer(l, true);
  layer(net.output, false);
  std::int64_t u = act[0];
  if (!net.head_row.empty()) {
    __int128 acc = static_cast<__int128>(net.head_u_ss) << f;
    for (std::size_t j = 0; j < net.head_row.size(); ++j) acc += static_cast<__int128>(net.head_row[j]) * act[j];
    u = rescale(acc, f);
  }
  u = std::clamp<std::int64_t>(u, net.u_min, net.u_max);
  return std::ldexp(static_cast<double>(u), -f);
}

}  // namespace

TEST_CASE("format and conversion") {
  FixedFormat fmt;
  CHECK(fmt.quantum() == std::ldexp(1.0, -16));
  CHECK(fmt.max_value() == 2147483647.0 / 65536.0);
  CHECK(fmt.max_value() > 32767.99998);
  CHECK(to_fixed(0.5, fmt) == 32768);
  CHECK(to_fixed(-1.0, fmt) == -65536);
  CHECK(from_fixed(32768, fmt) == 0.5);
  CHECK_THROWS_AS(to_fixed(70000.0, fmt), FixedRangeError);
  CHECK(to_fixed(1.5 * fmt.quantum(), fmt) == 2);
  CHECK(to_fixed(2.5 * fmt.quantum(), fmt) == 2);
  FixedFormat bad;
  bad.frac_bits = 31;
  CHECK_THROWS(bad.validate());
  bad.frac_bits = 0;
  CHECK_THROWS(bad.validate());
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double v = rng.uniform(-30000.0, 30000.0);
    CHECK(std::abs(from_fixed(to_fixed(v, fmt), fmt) - v) <= 0.5 * fmt.quantum());
  }
}

TEST_CASE("round half to even") {
  CHECK(shift_round_even(3, 1) == 2);
  CHECK(shift_round_even(5, 1) == 2);
  CHECK(shift_round_even(-3, 1) == -2);
  CHECK(shift_round_even(-5, 1) == -2);
  CHECK(shift_round_even(7, 2) == 2);
  CHECK(shift_round_even(6, 2) == 2);
  CHECK(shift_round_even(10, 2) == 2);
  CHECK(shift_round_even(-7, 2) == -2);
  for (std::int64_t v = -5000; v <= 5000; v += 3) CHECK(shift_round_even(v, 4) == rescale(v, 4));
}

TEST_CASE("batch norm folding") {
  const NeuralPolicy p = make_policy(Formulation::Nmpc, 3);
  const auto folded = fold_batch_norm(p.params);
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const Eigen::Vector2d x(rng.uniform(0.01, 2.0), rng.uniform(-20.0, 0.0));
    const Vector a = forward_folded(folded, p.params.output, x);
    const Matrix b = forward_trunk(p.params, Matrix(x), Mode::Infer);
    CHECK(std::abs(a(0) - b(0, 0)) <= 1e-10 * std::max(1.0, std::abs(b(0, 0))));
  }
}

TEST_CASE("quantization") {
  NeuralPolicy zero = make_policy(Formulation::Nmpc, 4);
  for (auto& l : zero.params.hidden) {
    l.weight.setZero();
    l.bias.setZero();
  }
  for (auto& n : zero.params.norms) {
    n.gamma.setZero();
    n.beta.setZero();
  }
  zero.params.output.weight.setZero();
  zero.params.output.bias.setZero();
  const QuantizedNet qz = quantize_net(zero);
  for (const auto& l : qz.hidden) {
    for (auto w : l.weight) CHECK(w == 0);
    for (auto b : l.bias) CHECK(b == 0);
  }
  // 0.1 is not on the Q16 grid; the lower bound moves up by less than one quantum
  const double lo = forward_fixed(qz, Eigen::Vector2d(1.0, -5.0)).u;
  CHECK(lo == from_fixed(qz.u_min, qz.fmt));
  CHECK(lo >= 0.1);
  CHECK(lo - 0.1 < qz.fmt.quantum());

  NeuralPolicy half = zero;
  half.params.output.weight(0, 0) = 0.5;
  CHECK(quantize_net(half).output.weight[0] == 32768);

  NeuralPolicy big = zero;
  big.params.output.weight(0, 3) = 70000.0;
  try {
    quantize_net(big);
    FAIL("expected a range error");
  } catch (const FixedRangeError& e) {
    CHECK(std::string(e.what()).find("output.weight") != std::string::npos);
  }

  // clamp bounds not on the grid are tightened inward
  const QuantizedNet q = quantize_net(make_policy(Formulation::LagNmpc, 5));
  CHECK(from_fixed(q.u_min, q.fmt) >= 0.1);
  CHECK(from_fixed(q.u_max, q.fmt) <= 0.9);
  CHECK(from_fixed(q.u_min, q.fmt) - 0.1 < q.fmt.quantum());
  CHECK(q.head_row.size() == 4);
  CHECK(q.max_error <= 0.5 * q.fmt.quantum());
  CHECK_FALSE(q.max_error_parameter.empty());
}

TEST_CASE("fixed-point inference") {
  Rng rng(6);
  for (Formulation f : {Formulation::Nmpc, Formulation::LagNmpc}) {
    const NeuralPolicy p = make_policy(f, 7);
    const QuantizedNet q = quantize_net(p);
    const auto states = halton_sample_states(StateRegion::box(default_state_box()), 500);
    double err = 0.0;
    for (const auto& x : states) {
      const FixedOutput o = forward_fixed(q, x);
      CHECK_FALSE(o.overflow);
      CHECK(o.u == reference_fixed(q, x));
      err = std::max(err, std::abs(o.u - p.evaluate(x)));
    }
    CHECK(err <= 1e-3);
    for (const Eigen::Vector2d corner : {Eigen::Vector2d(0.01, -20.0), Eigen::Vector2d(2.0, 0.0),
                                        Eigen::Vector2d(0.01, 0.0), Eigen::Vector2d(2.0, -20.0)})
      CHECK_FALSE(forward_fixed(q, corner).overflow);

    // precision improves with more fractional bits
    FixedFormat f12, f20;
    f12.frac_bits = 12;
    f20.frac_bits = 20;
    const QuantizedNet q12 = quantize_net(p, f12), q20 = quantize_net(p, f20);
    double e12 = 0.0, e20 = 0.0;
    for (const auto& x : states) {
      e12 = std::max(e12, std::abs(forward_fixed(q12, x).u - p.evaluate(x)));
      e20 = std::max(e20, std::abs(forward_fixed(q20, x).u - p.evaluate(x)));
    }
    CHECK(e20 <= e12);
  }
}

TEST_CASE("saturation instead of wrap-around") {
  NeuralPolicy p = make_policy(Formulation::Nmpc, 8, 1.0);
  for (auto& l : p.params.hidden) l.weight.setConstant(200.0);
  for (auto& n : p.params.norms) {
    n.gamma.setOnes();
    n.beta.setZero();
    n.running_mean.setZero();
    n.running_var.setOnes();
  }
  p.params.output.weight.setConstant(1.0);
  const QuantizedNet q = quantize_net(p);
  const FixedOutput o = forward_fixed(q, Eigen::Vector2d(2.0, 0.0));
  CHECK(o.overflow);
  CHECK(o.u == from_fixed(q.u_max, q.fmt));
  const FixedOutput in = forward_fixed(q, Eigen::Vector2d(1e6, 0.0));
  CHECK(in.overflow);
  for (double u : {o.u, in.u}) {
    CHECK(u >= 0.1);
    CHECK(u <= 0.9);
  }
}

TEST_CASE("random networks stay inside the input bounds") {
  Rng rng(9);
  for (int n = 0; n < 50; ++n) {
    const NeuralPolicy p = make_policy(n % 2 ? Formulation::Nmpc : Formulation::LagNmpc, 100 + n,
                                       std::pow(10.0, rng.uniform(-2.0, 2.0)));
    const QuantizedNet q = quantize_net(p);
    for (int k = 0; k < 100; ++k) {
      const Eigen::Vector2d x(rng.uniform(-5.0, 5.0), rng.uniform(-40.0, 20.0));
      const double u = forward_fixed(q, x).u;
      CHECK(u >= 0.1);
      CHECK(u <= 0.9);
    }
  }
}

TEST_CASE("batch inference, latency and persistence") {
  const NeuralPolicy p = make_policy(Formulation::LagNmpc, 10);
  const QuantizedNet q = quantize_net(p);
  const auto states = halton_sample_states(StateRegion::box(default_state_box()), 300);
  Matrix xs(2, 300);
  for (int k = 0; k < 300; ++k) xs.col(k) = states[static_cast<std::size_t>(k)];
  const auto a = forward_fixed_batch(q, xs);
  const auto b = forward_fixed_batch_serial(q, xs);
  for (int k = 0; k < 300; ++k) {
    CHECK(a[static_cast<std::size_t>(k)].u == b[static_cast<std::size_t>(k)].u);
    CHECK(a[static_cast<std::size_t>(k)].u == forward_fixed(q, states[static_cast<std::size_t>(k)]).u);
  }

  const LatencyStats s100 = bench_latency(q, xs, 100);
  const LatencyStats s10k = bench_latency(q, xs, 10000);
  CHECK(s100.median_ns > 0);
  CHECK(s10k.median_ns < 100000.0);
  CHECK(s10k.min_ns <= s10k.median_ns);
  CHECK(s10k.median_ns <= s10k.p99_ns);
  CHECK(s100.median_ns <= 3 * s10k.median_ns);
  CHECK(s10k.median_ns <= 3 * s100.median_ns);
  CHECK_THROWS(bench_latency(q, xs, 99));
  CHECK(bench_latency(p, xs, 200).median_ns > 0);

  std::stringstream io;
  write_quantized(io, q);
  const std::string text = io.str();
  const QuantizedNet back = read_quantized(io);
  CHECK(back.hidden[1].weight == q.hidden[1].weight);
  CHECK(back.head_row == q.head_row);
  CHECK(back.u_min == q.u_min);
  CHECK(back.u_max == q.u_max);
  std::stringstream again;
  write_quantized(again, back);
  CHECK(again.str() == text);
}
