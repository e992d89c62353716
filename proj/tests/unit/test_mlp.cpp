#include "lagnmpc/mlp.hpp"
#include "lagnmpc/rng.hpp"
#include "lagnmpc/training.hpp"
#include "lagnmpc/verify.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace lagnmpc;

namespace {

MlpParams zero_net(int output_dim) {
  MlpParams p = init_mlp({2, 2, 20, output_dim}, 1);
  for (auto& l : p.hidden) {
    l.weight.setZero();
    l.bias.setZero();
  }
  for (auto& n : p.norms) {
    n.gamma.setOnes();
    n.beta.setZero();
  }
  p.output.weight.setZero();
  p.output.bias.setZero();
  return p;
}

TrainingBatch random_batch(Rng& rng, int n, int label_rows) {
  TrainingBatch b;
  b.states.resize(2, n);
  b.labels.resize(label_rows, n);
  for (int k = 0; k < n; ++k) {
    b.states.col(k) << rng.uniform(0.01, 2.0), rng.uniform(-20.0, 0.0);
    for (int i = 0; i < label_rows; ++i) b.labels(i, k) = rng.uniform(0.1, 0.9);
  }
  return b;
}

}  // namespace

TEST_CASE("clamp") {
  CHECK(clamp(0.5, 0.1, 0.9) == 0.5);
  CHECK(clamp(-3.0, 0.1, 0.9) == 0.1);
  CHECK(clamp(1.2, 0.1, 0.9) == 0.9);
  CHECK_THROWS(clamp(0.5, 0.9, 0.1));
  CHECK(clamp_derivative(0.5, 0.1, 0.9) == 1.0);
  CHECK(clamp_derivative(0.1, 0.1, 0.9) == 1.0);
  CHECK(clamp_derivative(0.9, 0.1, 0.9) == 1.0);
  CHECK(clamp_derivative(0.95, 0.1, 0.9) == 0.0);
  CHECK(clamp_derivative(0.0, 0.1, 0.9) == 0.0);
  const Vector v = clamp(Eigen::Vector3d(-1, 0.3, 2), 0.1, 0.9);
  CHECK(v == Eigen::Vector3d(0.1, 0.3, 0.9));
}

TEST_CASE("forward passes") {
  const InputBounds bounds;
  const Eigen::Vector2d x(0.7, -4.0);
  CHECK(forward_nmpc(zero_net(1), bounds, x, Mode::Infer) == 0.1);

  const LaguerreBasis basis(0.9, 4, 20);
  const LaguerreHead head(basis, 0.4);
  const Vector seq = forward_lagnmpc(zero_net(4), head, bounds, x, Mode::Infer);
  CHECK(seq.size() == 20);
  for (Eigen::Index i = 0; i < seq.size(); ++i) CHECK(seq(i) == 0.4);

  // identity head: output i = clamp(eta_i + u_ss)
  const LaguerreHead id(LaguerreBasis(0.0, 5, 5), 0.4);
  const MlpParams p = random_mlp({2, 2, 6, 5}, 8);
  const Matrix raw = forward_trunk(p, Matrix(x), Mode::Infer);
  const Vector out = forward_lagnmpc(p, id, bounds, x, Mode::Infer);
  for (int i = 0; i < 5; ++i) CHECK(out(i) == clamp(raw(i, 0) + 0.4, 0.1, 0.9));
  CHECK(forward_lagnmpc_first(p, id, bounds, x, Mode::Infer) == out(0));

  const MlpParams q = random_mlp({2, 2, 20, 4}, 9, 0.3);
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const Eigen::Vector2d s(rng.uniform(0.01, 2.0), rng.uniform(-20.0, 0.0));
    CHECK(forward_lagnmpc_first(q, head, bounds, s, Mode::Infer) == forward_lagnmpc(q, head, bounds, s, Mode::Infer)(0));
  }
}

TEST_CASE("hand-computed single-node network") {
  MlpParams p = init_mlp({1, 1, 1, 1}, 0);
  p.hidden[0].weight(0, 0) = 2.0;
  p.hidden[0].bias(0) = 0.5;
  p.norms[0].gamma(0) = 3.0;
  p.norms[0].beta(0) = 0.1;
  p.norms[0].running_mean(0) = 1.0;
  p.norms[0].running_var(0) = 4.0;
  p.output.weight(0, 0) = 0.2;
  p.output.bias(0) = 0.05;
  const double z = 2.0 * 1.5 + 0.5;
  const double y = 3.0 * (z - 1.0) / std::sqrt(4.0 + p.bn_eps) + 0.1;
  const double expected = std::clamp(0.2 * std::max(y, 0.0) + 0.05, 0.1, 0.9);
  CHECK(forward_nmpc(p, {}, Vector::Constant(1, 1.5), Mode::Infer) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(expected == doctest::Approx(0.2 * (3.0 * 2.5 / std::sqrt(4.0) + 0.1) + 0.05).epsilon(1e-5));
}

TEST_CASE("train and infer agree when running statistics equal the batch statistics") {
  MlpParams p = random_mlp({2, 2, 8, 1}, 21);
  Rng rng(2);
  const TrainingBatch b = random_batch(rng, 16, 1);
  ForwardCache cache;
  for (int pass = 0; pass < 2; ++pass) {
    forward_trunk(p, b.states, Mode::Train, &cache);
    // Layer j's batch statistics depend on layer j-1's running stats only through
    // the inputs, which match once earlier layers match; one pass per layer.
    for (std::size_t j = 0; j < p.norms.size(); ++j) {
      p.norms[j].running_mean = cache.batch_mean[j];
      p.norms[j].running_var = cache.batch_var[j];
    }
  }
  const Matrix a = forward_trunk(p, b.states, Mode::Train);
  const Matrix c = forward_trunk(p, b.states, Mode::Infer);
  CHECK((a - c).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("backward") {
  Rng rng(3);
  const InputBounds bounds;
  SUBCASE("zero gradient at the minimum") {
    const MlpParams p = random_mlp({2, 1, 3, 1}, 4, 0.1);
    TrainingBatch b = random_batch(rng, 4, 1);
    ForwardCache cache;
    const Matrix raw = forward_trunk(p, b.states, Mode::Train, &cache);
    for (int k = 0; k < 4; ++k) b.labels(0, k) = clamp(raw(0, k), 0.1, 0.9);
    LossContext ctx;
    ctx.head = Formulation::Nmpc;
    const LossGradient g = loss_and_gradient(p, b, ctx);
    CHECK(g.loss.total() == 0.0);
    for (const auto& v : trainable_parameters(g.grads))
      for (double d : v.values) CHECK(d == 0.0);
  }
  SUBCASE("saturated clamp blocks the gradient") {
    MlpParams p = random_mlp({2, 1, 3, 1}, 5);
    p.output.bias(0) = 50.0;
    const TrainingBatch b = random_batch(rng, 4, 1);
    LossContext ctx;
    ctx.head = Formulation::Nmpc;
    const LossGradient g = loss_and_gradient(p, b, ctx);
    CHECK(g.loss.total() > 0.0);
    CHECK(g.grads.output.weight.isZero());
    CHECK(g.grads.output.bias.isZero());
  }
  SUBCASE("finite differences on small random nets") {
    for (int trial = 0; trial < 5; ++trial) {
      const MlpParams p = random_mlp({2, 1, 3, 1}, 100 + trial);
      const TrainingBatch b = random_batch(rng, 4, 1);
      LossContext ctx;
      ctx.head = Formulation::Nmpc;
      const GradientCheck c = check_gradients(p, b, ctx);
      CHECK(c.checked > 0);
      CHECK(c.max_relative_error <= 1e-5);
    }
  }
  SUBCASE("stale cache rejected") {
    const MlpParams p = random_mlp({2, 1, 3, 1}, 6);
    ForwardCache cache;
    CHECK_THROWS(backward(p, cache, Matrix::Zero(1, 4)));
  }
}

TEST_CASE("AdamW") {
  AdamWOptions opt;
  std::vector<double> w{1.0}, g{1.0}, m{0.0}, v{0.0};
  opt.lr = 0.1;
  opt.weight_decay = 0.0;
  adamw_step(w, g, m, v, opt, 1, true);
  CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-6));

  w = {1.0};
  g = {0.0};
  m = {0.0};
  v = {0.0};
  adamw_step(w, g, m, v, opt, 1, true);
  CHECK(w[0] == 1.0);

  opt.lr = 1e-4;
  opt.weight_decay = 0.01;
  adamw_step(w, g, m, v, opt, 1, true);
  CHECK(w[0] == doctest::Approx(1.0 - 1e-6).epsilon(1e-15));
  w = {1.0};
  adamw_step(w, g, m, v, opt, 1, false);
  CHECK(w[0] == 1.0);

  opt.lr = 0.0;
  CHECK_THROWS(adamw_step(w, g, m, v, opt, 1, true));
  opt.lr = 1e-3;
  CHECK_THROWS(adamw_step(w, g, m, v, opt, 0, true));

  // decay touches affine parameters only
  MlpParams p = random_mlp({2, 2, 4, 1}, 7);
  const MlpParams before = p;
  AdamW adam(p, {1e-2, 0.5});
  adam.step(p, zeros_like(p));
  CHECK(adam.steps() == 1);
  CHECK(p.norms[0].gamma == before.norms[0].gamma);
  CHECK(p.norms[1].beta == before.norms[1].beta);
  CHECK(p.norms[0].running_mean == before.norms[0].running_mean);
  CHECK(p.hidden[0].weight.isApprox(before.hidden[0].weight * (1 - 5e-3)));
  CHECK(p.output.bias.isApprox(before.output.bias * (1 - 5e-3)));
}

TEST_CASE("running statistics") {
  MlpParams p = random_mlp({2, 1, 3, 1}, 8);
  Rng rng(9);
  const TrainingBatch b = random_batch(rng, 10, 1);
  ForwardCache cache;
  forward_trunk(p, b.states, Mode::Train, &cache);
  const Vector mean = p.norms[0].running_mean, var = p.norms[0].running_var;
  update_running_stats(p, cache);
  const Vector expected_mean = 0.9 * mean + 0.1 * cache.batch_mean[0];
  const Vector expected_var = 0.9 * var + 0.1 * cache.batch_var[0] * (10.0 / 9.0);
  CHECK((p.norms[0].running_mean - expected_mean).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((p.norms[0].running_var - expected_var).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("policy file round trip") {
  NeuralPolicy policy;
  policy.formulation = Formulation::LagNmpc;
  policy.params = random_mlp({2, 2, 20, 4}, 10);
  policy.head = LaguerreHead(LaguerreBasis(0.9, 4, 20), 0.4);
  std::stringstream s;
  write_policy(s, policy);
  const std::string text = s.str();
  const NeuralPolicy back = read_policy(s);
  CHECK(back.formulation == Formulation::LagNmpc);
  CHECK(back.params.arch == policy.params.arch);
  CHECK(back.head->L == policy.head->L);
  CHECK(back.params.norms[1].running_var == policy.params.norms[1].running_var);
  CHECK(back.params.output.weight == policy.params.output.weight);
  std::stringstream again;
  write_policy(again, back);
  CHECK(again.str() == text);
  const Eigen::Vector2d x(0.3, -2.0);
  CHECK(back.evaluate(x) == policy.evaluate(x));

  std::stringstream broken(text.substr(0, text.size() / 2));
  CHECK_THROWS(read_policy(broken));
}

TEST_CASE("parameter validation") {
  MlpParams p = init_mlp({2, 2, 20, 1}, 3);
  CHECK_NOTHROW(p.validate());
  p.norms[0].running_var(0) = -1.0;
  CHECK_THROWS(p.validate());
  p = init_mlp({2, 2, 20, 1}, 3);
  p.output.weight.resize(1, 5);
  CHECK_THROWS(p.validate());
  CHECK(init_mlp({2, 2, 20, 1}, 3).hidden[0].weight == init_mlp({2, 2, 20, 1}, 3).hidden[0].weight);
  CHECK(init_mlp({2, 2, 20, 1}, 3).hidden[0].weight != init_mlp({2, 2, 20, 1}, 4).hidden[0].weight);
}
