#include "lagnmpc/verify.hpp"

#include "lagnmpc/pipeline.hpp"
#include "lagnmpc/rng.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace lagnmpc {

namespace fs = std::filesystem;

// --- gradient oracle -----------------------------------------------------------

namespace {

/// Which side of every kink the batch sits on: ReLU signs, clamp regions, violation regions.
std::vector<signed char> kink_signature(const MlpParams& params, const TrainingBatch& batch, const LossContext& ctx) {
  ForwardCache cache;
  const Matrix raw = forward_trunk(params, batch.states, Mode::Train, &cache);
  std::vector<signed char> sig;
  for (const auto& y : cache.activations) {
    for (Eigen::Index k = 0; k < y.size(); ++k) sig.push_back(y.data()[k] > 0);
  }
  Matrix s = raw;
  if (ctx.head == Formulation::LagNmpc) {
    s = ctx.laguerre->L * raw;
    s.array() += ctx.laguerre->u_ss;
  }
  auto region = [](double v, double lo, double hi) -> signed char { return v < lo ? -1 : (v > hi ? 1 : 0); };
  for (Eigen::Index k = 0; k < s.size(); ++k) sig.push_back(region(s.data()[k], ctx.bounds.lower, ctx.bounds.upper));
  if (ctx.mode == LossMode::ConInf) {
    for (Eigen::Index b = 0; b < batch.size(); ++b) {
      const double u0 = clamp(s(0, b), ctx.bounds.lower, ctx.bounds.upper);
      const Vector next = ctx.plant->next_state(batch.states.col(b), u0);
      for (Eigen::Index i = 0; i < next.size(); ++i) {
        sig.push_back(region(next(i), ctx.state_box.lower(i), ctx.state_box.upper(i)));
      }
    }
  }
  return sig;
}

}  // namespace

GradientCheck check_gradients(const MlpParams& params, const TrainingBatch& batch, const LossContext& ctx,
                              double step, double floor) {
  const LossGradient lg = loss_and_gradient(params, batch, ctx, Mode::Train);
  const auto analytic = trainable_parameters(lg.grads);
  const auto base_signature = kink_signature(params, batch, ctx);

  GradientCheck out;
  MlpParams probe = params;
  auto views = trainable_parameters(probe);
  for (std::size_t b = 0; b < views.size(); ++b) {
    for (std::size_t i = 0; i < views[b].values.size(); ++i) {
      double& p = views[b].values[i];
      const double saved = p;
      p = saved + step;
      const bool kink_plus = kink_signature(probe, batch, ctx) != base_signature;
      const double f_plus = total_loss(probe, batch, ctx, Mode::Train).total();
      p = saved - step;
      const bool kink_minus = kink_signature(probe, batch, ctx) != base_signature;
      const double f_minus = total_loss(probe, batch, ctx, Mode::Train).total();
      p = saved;
      if (kink_plus || kink_minus) {
        ++out.skipped;
        continue;
      }
      const double fd = (f_plus - f_minus) / (2.0 * step);
      const double bp = analytic[b].values[i];
      const double rel = std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), floor});
      ++out.checked;
      if (rel > out.max_relative_error) {
        out.max_relative_error = rel;
        out.worst_parameter = views[b].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

MlpParams random_mlp(const MlpArchitecture& arch, std::uint64_t seed, double scale) {
  MlpParams p = init_mlp(arch, seed);
  Rng rng(Rng::mix(seed) + 17);
  auto fill = [&](auto& m, double lo, double hi) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(lo, hi);
  };
  for (auto& l : p.hidden) {
    l.weight *= scale;
    l.bias *= scale;
  }
  for (auto& n : p.norms) {
    fill(n.gamma, 0.5, 1.5);
    fill(n.beta, -0.5, 0.5);
    fill(n.running_mean, -1.0, 1.0);
    fill(n.running_var, 0.5, 2.0);
  }
  fill(p.output.weight, -scale, scale);
  fill(p.output.bias, -0.5 * scale, 0.5 * scale);
  return p;
}

// --- reporting -----------------------------------------------------------------

std::string format_result(const CriterionResult& r) {
  const char* verdict = r.gating ? (r.passed ? "PASS" : "FAIL") : (r.passed ? "INFO(pass)" : "INFO(fail)");
  return fmt::format("{:<5} {:<10} {} | {} [{:.2f} s]", r.id, verdict, r.title, r.detail, r.seconds);
}

int failures(const std::vector<CriterionResult>& results) {
  int n = 0;
  for (const auto& r : results) n += r.gating && !r.passed;
  return n;
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

template <class F>
CriterionResult timed(std::string id, std::string title, F&& body) {
  CriterionResult r;
  r.id = std::move(id);
  r.title = std::move(title);
  const auto t0 = clock_type::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

// --- suite -------------------------------------------------------------------

struct AcceptanceSuite::Artifacts {
  RunConfig cfg;  // reduced training budget
  Dataset data;
  NeuralPolicy supervised;
  NeuralPolicy coninf;
  NeuralPolicy supervised_nmpc;  // NMPC head, for the offset-free check
  double seconds = 0.0;
};

AcceptanceSuite::AcceptanceSuite(RunConfig cfg, std::string work_dir)
    : cfg_(std::move(cfg)), work_dir_(std::move(work_dir)) {}

AcceptanceSuite::~AcceptanceSuite() = default;

AcceptanceSuite::Artifacts& AcceptanceSuite::trained() {
  if (artifacts_) return *artifacts_;
  const auto t0 = clock_type::now();
  auto a = std::make_unique<Artifacts>();
  a->cfg = cfg_;
  a->cfg.samples = 5000;
  a->cfg.train.epochs = 200;
  a->cfg.formulation = Formulation::LagNmpc;

  const BuckBoostPlant plant(a->cfg.plant);
  const LaguerreBasis basis = config_basis(a->cfg);
  const auto states = halton_sample_states(StateRegion::box(a->cfg.mpc.state_box), a->cfg.samples);
  a->data = generate_dataset(a->cfg.mpc, plant, &basis, states);

  const LaguerreHead head(basis, a->cfg.mpc.u_ss);
  const InputBounds bounds{a->cfg.mpc.input_box.lower(0), a->cfg.mpc.input_box.upper(0)};
  TrainConfig tc = a->cfg.train;
  tc.head = Formulation::LagNmpc;
  tc.loss = LossMode::Supervised;
  a->supervised = train(a->data, tc, &plant, &head, bounds, a->cfg.mpc.state_box).policy;
  tc.loss = LossMode::ConInf;
  a->coninf = train(a->data, tc, &plant, &head, bounds, a->cfg.mpc.state_box).policy;
  tc.head = Formulation::Nmpc;
  tc.loss = LossMode::Supervised;
  a->supervised_nmpc = train(a->data, tc, &plant, nullptr, bounds, a->cfg.mpc.state_box).policy;
  a->seconds = seconds_since(t0);
  artifacts_ = std::move(a);
  return *artifacts_;
}

const NeuralPolicy& AcceptanceSuite::full_coninf() {
  if (full_) return *full_;
  const auto t0 = clock_type::now();
  RunConfig c = cfg_;
  c.formulation = Formulation::LagNmpc;
  const BuckBoostPlant plant(c.plant);
  const LaguerreBasis basis = config_basis(c);
  const auto states = halton_sample_states(StateRegion::box(c.mpc.state_box), c.samples);
  const Dataset data = generate_dataset(c.mpc, plant, &basis, states);
  const LaguerreHead head(basis, c.mpc.u_ss);
  TrainConfig tc = c.train;
  tc.head = Formulation::LagNmpc;
  tc.loss = LossMode::ConInf;
  full_ = train(data, tc, &plant, &head, {c.mpc.input_box.lower(0), c.mpc.input_box.upper(0)}, c.mpc.state_box).policy;
  full_seconds_ = seconds_since(t0);
  return *full_;
}

CriterionResult AcceptanceSuite::steady_state() {
  return timed("AC1", "steady-state reproduction", [&](CriterionResult& r) {
    const auto t0 = clock_type::now();
    const SteadyState ss = lagnmpc::steady_state(BuckBoostParams{}, -10.0);
    const double ms = 1e3 * seconds_since(t0);
    r.passed = ss.u == 0.4 && std::abs(ss.x1 - 0.101) <= 5e-4 && ms < 1.0;
    r.detail = fmt::format("u_ss={} x1_ss={:.6f} call {:.4f} ms", format_double(ss.u), ss.x1, ms);
  });
}

CriterionResult AcceptanceSuite::laguerre_equivalence() {
  return timed("AC2", "Laguerre equivalence (alpha=0, M=N=20)", [&](CriterionResult& r) {
    MpcConfig mpc = cfg_.mpc;
    mpc.horizon = 20;
    mpc.laguerre_size = 20;
    mpc.laguerre_pole = 0.0;
    const BuckBoostPlant plant(cfg_.plant);
    const LaguerreBasis basis(0.0, 20, 20);
    const auto states = halton_sample_states(StateRegion::box(mpc.state_box), 50);
    const auto nmpc = solve_states(mpc, plant, nullptr, states);
    const auto lag = solve_states(mpc, plant, &basis, states);
    int both = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (nmpc[i].status != SolveStatus::Converged || lag[i].status != SolveStatus::Converged) continue;
      ++both;
      worst = std::max(worst, std::abs(nmpc[i].first_input() - lag[i].first_input()));
    }
    r.passed = both > 0 && worst <= 1e-3;
    r.detail = fmt::format("{} of 50 states converged in both, max |du0| = {:.3g}", both, worst);
  });
}

CriterionResult AcceptanceSuite::laguerre_properties() {
  return timed("AC3", "Laguerre basis properties", [&](CriterionResult& r) {
    double residual = 0.0;
    for (double alpha : {0.0, 0.5, 0.9}) {
      const LaguerreBasis basis(alpha, 4, 200);
      const Matrix a = build_AL(alpha, 4);
      for (int i = 0; i + 1 < basis.horizon(); ++i) {
        residual = std::max(residual, (basis.row(i + 1) - a * basis.row(i)).cwiseAbs().maxCoeff());
      }
    }
    const LaguerreBasis long_basis(0.9, 4, 2000);
    const Matrix& l = long_basis.matrix();
    const double ortho = (l.transpose() * l - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff();
    r.passed = residual <= 1e-12 && ortho <= 1e-6;
    r.detail = fmt::format("recursion residual {:.2e}, |L'L - I|max {:.2e} (N=2000)", residual, ortho);
  });
}

CriterionResult AcceptanceSuite::gradient_oracle() {
  return timed("AC4", "gradient oracle", [&](CriterionResult& r) {
    const BuckBoostPlant plant(cfg_.plant);
    Rng rng(cfg_.seed + 4);
    double worst = 0.0;
    int checked = 0, skipped = 0;

    // Small random networks, supervised loss on both heads.
    const LaguerreBasis basis(0.9, 3, 6);
    const LaguerreHead head(basis, 0.4);
    for (int trial = 0; trial < 6; ++trial) {
      const bool laguerre = trial % 2 == 1;
      MlpArchitecture arch{2, 1, 3, laguerre ? 3 : 1};
      const MlpParams p = random_mlp(arch, cfg_.seed + trial);
      TrainingBatch batch;
      batch.states.resize(2, 4);
      batch.labels.resize(laguerre ? 6 : 1, 4);
      for (int b = 0; b < 4; ++b) {
        batch.states.col(b) << rng.uniform(0.01, 2.0), rng.uniform(-20.0, 0.0);
        for (Eigen::Index i = 0; i < batch.labels.rows(); ++i) batch.labels(i, b) = rng.uniform(0.1, 0.9);
      }
      LossContext ctx;
      ctx.head = laguerre ? Formulation::LagNmpc : Formulation::Nmpc;
      ctx.laguerre = laguerre ? &head : nullptr;
      const GradientCheck g = check_gradients(p, batch, ctx);
      worst = std::max(worst, g.max_relative_error);
      checked += g.checked;
      skipped += g.skipped;
    }

    // Full constraints-informed loss on the default architecture; the batch
    // includes states whose every admissible input leaves X.
    const LaguerreBasis full_basis = config_basis(cfg_);
    const LaguerreHead full_head(full_basis, cfg_.mpc.u_ss);
    MlpArchitecture arch{2, 2, 20, full_basis.size()};
    const MlpParams p = random_mlp(arch, cfg_.seed + 99, 0.5);
    TrainingBatch batch;
    batch.states.resize(2, 8);
    batch.states << 0.01, 0.01, 2.0, 1.9, 0.5, 1.5, 2.0, 0.2,  //
        -20.0, -15.0, -0.5, -1.0, -10.0, -19.9, -20.0, -3.0;
    batch.labels.resize(full_basis.horizon(), 8);
    for (Eigen::Index k = 0; k < batch.labels.size(); ++k) batch.labels.data()[k] = rng.uniform(0.1, 0.9);
    LossContext ctx;
    ctx.head = Formulation::LagNmpc;
    ctx.laguerre = &full_head;
    ctx.mode = LossMode::ConInf;
    ctx.plant = &plant;
    ctx.gamma = cfg_.train.gamma;
    ctx.state_box = cfg_.mpc.state_box;
    const double constraint = total_loss(p, batch, ctx, Mode::Train).constraint;
    const GradientCheck g = check_gradients(p, batch, ctx);
    worst = std::max(worst, g.max_relative_error);
    checked += g.checked;
    skipped += g.skipped;

    r.passed = worst <= 1e-5 && constraint > 0 && checked > 0;
    r.detail = fmt::format("max relative error {:.2e} over {} entries ({} skipped at kinks), ConInf term {:.3g}",
                           worst, checked, skipped, constraint);
  });
}

CriterionResult AcceptanceSuite::hard_input_constraint() {
  return timed("AC5", "hard input constraint (float and fixed point)", [&](CriterionResult& r) {
    Rng rng(cfg_.seed + 5);
    const LaguerreBasis basis = config_basis(cfg_);
    const LaguerreHead head(basis, cfg_.mpc.u_ss);
    const InputBounds bounds{cfg_.mpc.input_box.lower(0), cfg_.mpc.input_box.upper(0)};
    long evaluations = 0, violations = 0;
    const int nets = 1000, inputs = 100;
    for (int n = 0; n < nets; ++n) {
      const bool laguerre = n % 2 == 0;
      const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
      MlpArchitecture arch{2, 2, 20, laguerre ? basis.size() : 1};
      NeuralPolicy policy;
      policy.formulation = laguerre ? Formulation::LagNmpc : Formulation::Nmpc;
      policy.params = random_mlp(arch, cfg_.seed * 1000 + n, scale);
      policy.bounds = bounds;
      if (laguerre) policy.head = head;
      const QuantizedNet q = quantize_net(policy, cfg_.fixed);
      for (int i = 0; i < inputs; ++i) {
        Vector x(2);
        x << rng.uniform(-5.0, 5.0), rng.uniform(-40.0, 20.0);
        const Vector seq = policy.evaluate_sequence(x);
        const double u_fixed = forward_fixed(q, x).u;
        ++evaluations;
        bool bad = u_fixed < bounds.lower || u_fixed > bounds.upper;
        for (Eigen::Index k = 0; k < seq.size(); ++k) bad |= !(seq(k) >= bounds.lower && seq(k) <= bounds.upper);
        violations += bad;
      }
    }
    r.passed = violations == 0 && evaluations == 100000;
    r.detail = fmt::format("{} combinations, {} outputs outside [{}, {}]", evaluations, violations, bounds.lower,
                           bounds.upper);
  });
}

CriterionResult AcceptanceSuite::coninf_effect() {
  return timed("AC6", "ConInf effect on a 100x100 law map", [&](CriterionResult& r) {
    Artifacts& a = trained();
    const RunConfig& c = a.cfg;
    const BuckBoostPlant plant(c.plant);
    const GridSpec grid = GridSpec::over(c.mpc.state_box, 100, 100);
    auto neural_map = [&](const NeuralPolicy& p) {
      return control_law_map([&] { return Controller::neural({ControllerKind::NnLagNmpc}, p, c.mpc.x_ss, c.mpc.u_ss); },
                             plant, grid, c.mpc.state_box);
    };
    const LawMap sup = neural_map(a.supervised);
    const LawMap con = neural_map(a.coninf);
    // The data set only holds states where the online problem is feasible; the
    // comparison runs over the same domain.
    const LawMap online = control_law_map(
        [&] { return Controller::online({ControllerKind::OnlineLagNmpc}, c.mpc, plant); }, plant, grid, c.mpc.state_box);
    const auto& mask = online.feasible;
    std::size_t domain = 0;
    for (auto f : mask) domain += f;

    const std::size_t sup_all = violation_count(sup, mask);
    const std::size_t con_all = violation_count(con, mask);
    const std::size_t con_x1 = violation_count(con, 0, c.mpc.state_box, &mask);
    r.passed = con_all < sup_all && con_x1 == 0;
    r.detail = fmt::format(
        "on {} solver-feasible nodes: violations supervised {} vs ConInf {}, ConInf x1 violations {} | whole grid: "
        "supervised {} (x1 {}), ConInf {} (x1 {}) | data {} samples, {} epochs, training {:.1f} s",
        domain, sup_all, con_all, con_x1, violation_count(sup), violation_count(sup, 0, c.mpc.state_box),
        violation_count(con), violation_count(con, 0, c.mpc.state_box), a.data.retained(), c.train.epochs, a.seconds);
  });
}

namespace {

struct LoopCheck {
  bool passed = true;
  std::string detail;
};

LoopCheck run_closed_loop(const RunConfig& cfg, const NeuralPolicy& coninf, int steps) {
  const BuckBoostPlant plant(cfg.plant);
  const std::vector<Vector> starts{Eigen::Vector2d(0.01, 0.0), Eigen::Vector2d(0.5, -19.0)};
  std::vector<SimulationJob> jobs;
  for (const auto& x0 : starts) jobs.push_back({x0, steps});
  LoopCheck out;
  auto report = [&](const std::string& name, const std::vector<Trajectory>& ts, bool check_states) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const TrajectoryMetrics m = trajectory_metrics(ts[i], cfg.mpc.x_ss, 0.05, cfg.mpc.input_box);
      const bool ok = ts[i].status == TrajectoryStatus::Completed && m.entry_step >= 0 && m.input_violations == 0 &&
                      (!check_states || m.state_violations == 0);
      out.passed &= ok;
      out.detail += fmt::format("{}{} x0=({}, {}): entry {} final dist {:.3g} state viol {}", out.detail.empty() ? "" : "; ",
                                name, starts[i](0), starts[i](1), m.entry_step, m.final_distance, m.state_violations);
      if (!ts[i].error.empty()) out.detail += " (" + ts[i].error + ")";
    }
  };
  const auto online = simulate_all(
      plant, [&] { return Controller::online({ControllerKind::OnlineLagNmpc}, cfg.mpc, plant); }, jobs,
      cfg.mpc.state_box);
  report("online LagNMPC", online, false);
  const auto neural = simulate_all(
      plant,
      [&] { return Controller::neural({ControllerKind::NnLagNmpc, true, 0.3}, coninf, cfg.mpc.x_ss, cfg.mpc.u_ss); },
      jobs, cfg.mpc.state_box);
  report("ConInf NN", neural, true);
  return out;
}

}  // namespace

CriterionResult AcceptanceSuite::closed_loop() {
  return timed("AC7", "closed-loop convergence within 600 steps", [&](CriterionResult& r) {
    const LoopCheck c = run_closed_loop(cfg_, full_coninf(), 600);
    r.passed = c.passed;
    r.detail = c.detail + fmt::format(" | network: {} samples, {} epochs, built in {:.1f} s", cfg_.samples,
                                      cfg_.train.epochs, full_seconds_);
  });
}

CriterionResult AcceptanceSuite::closed_loop_extended(int steps) {
  auto r = timed("AC7x", fmt::format("closed-loop convergence within {} steps", steps), [&](CriterionResult& r) {
    const LoopCheck c = run_closed_loop(cfg_, full_coninf(), steps);
    r.passed = c.passed;
    r.detail = c.detail;
  });
  r.gating = false;
  return r;
}

CriterionResult AcceptanceSuite::offset_free() {
  return timed("AC8", "offset-free exactness at x_ss", [&](CriterionResult& r) {
    std::vector<std::pair<std::string, NeuralPolicy>> policies;
    const LaguerreBasis basis = config_basis(cfg_);
    const InputBounds bounds{cfg_.mpc.input_box.lower(0), cfg_.mpc.input_box.upper(0)};
    for (int k = 0; k < 4; ++k) {
      NeuralPolicy p;
      p.formulation = k % 2 ? Formulation::Nmpc : Formulation::LagNmpc;
      p.params = random_mlp({2, 2, 20, k % 2 ? 1 : basis.size()}, cfg_.seed + 80 + k);
      p.bounds = bounds;
      if (p.formulation == Formulation::LagNmpc) p.head = LaguerreHead(basis, cfg_.mpc.u_ss);
      policies.emplace_back("random", std::move(p));
    }
    if (artifacts_) {
      policies.emplace_back("supervised", artifacts_->supervised);
      policies.emplace_back("coninf", artifacts_->coninf);
      policies.emplace_back("supervised-nmpc", artifacts_->supervised_nmpc);
    }
    if (full_) policies.emplace_back("coninf-full", *full_);
    int exact = 0;
    for (auto& [name, p] : policies) {
      const ControllerKind kind = p.formulation == Formulation::Nmpc ? ControllerKind::NnNmpc : ControllerKind::NnLagNmpc;
      Controller c = Controller::neural({kind, true, 0.3}, p, cfg_.mpc.x_ss, cfg_.mpc.u_ss);
      exact += c.control(cfg_.mpc.x_ss).u == cfg_.mpc.u_ss;
    }
    r.passed = exact == static_cast<int>(policies.size());
    r.detail = fmt::format("{} of {} network controllers return u_ss = {} exactly", exact, policies.size(),
                           format_double(cfg_.mpc.u_ss));
  });
}

CriterionResult AcceptanceSuite::fixed_point() {
  return timed("AC9", "fixed-point fidelity and latency", [&](CriterionResult& r) {
    const NeuralPolicy& policy = full_coninf();
    FixedFormat fmt16;
    fmt16.frac_bits = 16;
    const QuantizedNet q = quantize_net(policy, fmt16);
    const auto states = halton_sample_states(StateRegion::box(cfg_.mpc.state_box), 1000);
    Matrix samples(2, static_cast<Eigen::Index>(states.size()));
    double max_err = 0.0;
    int overflows = 0;
    for (std::size_t k = 0; k < states.size(); ++k) {
      samples.col(static_cast<Eigen::Index>(k)) = states[k];
      const FixedOutput f = forward_fixed(q, states[k]);
      max_err = std::max(max_err, std::abs(f.u - policy.evaluate(states[k])));
      overflows += f.overflow;
    }
    const LatencyStats s = bench_latency(q, samples, 10000);
    r.passed = max_err <= 1e-3 && s.median_ns < 100000.0 && overflows == 0;
    r.detail = fmt::format("max |fixed - float| {:.3g} over 1000 states, {} overflows, median {:.0f} ns, p99 {:.0f} ns",
                           max_err, overflows, s.median_ns, s.p99_ns);
  });
}

CriterionResult AcceptanceSuite::determinism() {
  return timed("AC10", "gen-data and train are byte-reproducible", [&](CriterionResult& r) {
    RunConfig c = cfg_;
    c.samples = 300;
    c.train.epochs = 20;
    std::vector<std::string> files;
    std::ostringstream log;
    std::vector<std::vector<std::string>> contents;
    for (const char* run : {"run_a", "run_b"}) {
      c.out_dir = (fs::path(work_dir_) / run).string();
      fs::remove_all(c.out_dir);
      cmd_gen_data(c, log);
      cmd_train(c, dataset_path(c), log);
      std::string stem = dataset_path(c);
      stem.resize(stem.size() - 4);
      files = {dataset_path(c), stem + "_diagnostics.jsonl", weights_path(c), history_path(c)};
      std::vector<std::string> v;
      for (const auto& f : files) v.push_back(read_file(f));
      contents.push_back(std::move(v));
    }
    int identical = 0;
    std::size_t bytes = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
      identical += contents[0][i] == contents[1][i];
      bytes += contents[0][i].size();
    }
    r.passed = identical == static_cast<int>(files.size());
    r.detail = fmt::format("{} of {} output files identical ({} bytes; {} samples, {} epochs)", identical, files.size(),
                           bytes, c.samples, c.train.epochs);
  });
}

std::vector<CriterionResult> AcceptanceSuite::run_quick(std::ostream* progress) {
  std::vector<CriterionResult> out;
  auto add = [&](CriterionResult r) {
    if (progress) *progress << format_result(r) << std::endl;
    out.push_back(std::move(r));
  };
  add(steady_state());
  add(laguerre_equivalence());
  add(laguerre_properties());
  add(gradient_oracle());
  add(hard_input_constraint());
  add(offset_free());
  return out;
}

std::vector<CriterionResult> AcceptanceSuite::run_all(std::ostream* progress) {
  std::vector<CriterionResult> out;
  auto add = [&](CriterionResult r) {
    if (progress) *progress << format_result(r) << std::endl;
    out.push_back(std::move(r));
  };
  add(steady_state());
  add(laguerre_equivalence());
  add(laguerre_properties());
  add(gradient_oracle());
  add(hard_input_constraint());
  add(coninf_effect());
  add(closed_loop());
  add(closed_loop_extended(4000));
  add(offset_free());
  add(fixed_point());
  add(determinism());
  return out;
}

}  // namespace lagnmpc
