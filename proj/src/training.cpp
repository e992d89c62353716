#include "lagnmpc/training.hpp"

#include "lagnmpc/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace lagnmpc {

std::string_view to_string(LossMode m) { return m == LossMode::ConInf ? "coninf" : "supervised"; }

LossMode parse_loss_mode(std::string_view s) {
  if (s == "supervised") return LossMode::Supervised;
  if (s == "coninf") return LossMode::ConInf;
  throw std::invalid_argument("unknown loss mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight decay must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(split > 0 && split < 1)) throw ConfigError("split fraction must lie strictly between 0 and 1");
  if (!(gamma.array() >= 0).all() || !gamma.allFinite()) throw ConfigError("gamma must be nonnegative");
  if (hidden_layers < 0 || hidden_nodes < 1) throw ConfigError("invalid hidden layer shape");
}

TrainingBatch make_batch(const Dataset& data, Formulation head, const std::vector<std::size_t>& rows) {
  TrainingBatch b;
  if (rows.empty()) return b;
  const auto& first = data.records.at(rows.front());
  const Eigen::Index nx = first.x.size();
  const Eigen::Index ny = head == Formulation::Nmpc ? 1 : first.U_star.size();
  b.states.resize(nx, static_cast<Eigen::Index>(rows.size()));
  b.labels.resize(ny, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    const auto& r = data.records.at(rows[c]);
    if (r.x.size() != nx || r.U_star.size() != first.U_star.size()) {
      throw std::invalid_argument("dataset records differ in shape");
    }
    b.states.col(c) = r.x;
    if (head == Formulation::Nmpc) {
      b.labels(0, c) = r.u_star;
    } else {
      b.labels.col(c) = r.U_star;
    }
  }
  return b;
}

TrainingBatch make_batch(const Dataset& data, Formulation head) {
  std::vector<std::size_t> rows(data.records.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return make_batch(data, head, rows);
}

Vector state_violation(ConstVectorRef x, const BoxSet& box) {
  return (x - box.upper).cwiseMax(0.0) + (x - box.lower).cwiseMin(0.0);
}

namespace {

void check_batch(const TrainingBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("loss of an empty batch");
  if (batch.labels.cols() != batch.size()) throw std::invalid_argument("labels and states differ in count");
}

/// Pre-clamp head output: raw itself for NMPC, L raw + U_ss for the Laguerre head.
Matrix head_preactivation(const Matrix& raw, const LaguerreHead* head) {
  if (!head) return raw;
  if (raw.rows() != head->size()) throw std::invalid_argument("network output does not match the Laguerre head");
  Matrix s = head->L * raw;
  s.array() += head->u_ss;
  return s;
}

double supervised_term(const Matrix& raw, const LaguerreHead* head, const InputBounds& bounds,
                       const TrainingBatch& batch, Matrix* grad_raw) {
  const Matrix s = head_preactivation(raw, head);
  if (batch.labels.rows() != s.rows()) throw std::invalid_argument("labels do not match the head output");
  const double n = static_cast<double>(batch.size());
  const Matrix u = s.unaryExpr([&](double v) { return clamp(v, bounds.lower, bounds.upper); });
  const Matrix err = u - batch.labels;
  if (grad_raw) {
    const Matrix ds =
        (2.0 / n) * err.cwiseProduct(s.unaryExpr([&](double v) { return clamp_derivative(v, bounds.lower, bounds.upper); }));
    *grad_raw += head ? Matrix(head->L.transpose() * ds) : ds;
  }
  return err.squaredNorm() / n;
}

double constraint_term(const Matrix& raw, const LaguerreHead* head, const InputBounds& bounds,
                       const TrainingBatch& batch, const PlantModel& plant, const Eigen::Vector2d& gamma,
                       const BoxSet& box, Matrix* grad_raw) {
  if (!plant.has_input_gradient()) throw std::invalid_argument("the constraint loss needs the plant input gradient");
  if (plant.state_dim() != 2 || box.dim() != 2 || batch.states.rows() != 2) {
    throw std::invalid_argument("the constraint loss expects a two-state plant");
  }
  const double n = static_cast<double>(batch.size());
  Vector next(2), dfdu(2);
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    double s0 = raw(0, b);
    if (head) {
      s0 = head->u_ss;
      for (int j = 0; j < head->size(); ++j) s0 += head->L(0, j) * raw(j, b);
    }
    const double u0 = clamp(s0, bounds.lower, bounds.upper);
    const auto x = batch.states.col(b);
    plant.step(x, u0, next);
    const Vector v = state_violation(next, box);
    const Vector gv = gamma.cwiseProduct(v);
    total += v.dot(gv);
    if (grad_raw && clamp_derivative(s0, bounds.lower, bounds.upper) != 0.0 && !v.isZero()) {
      plant.input_gradient(x, u0, dfdu);
      const double ds0 = (2.0 / n) * gv.dot(dfdu);
      if (head) {
        grad_raw->col(b) += ds0 * head->L.row(0).transpose();
      } else {
        (*grad_raw)(0, b) += ds0;
      }
    }
  }
  return total / n;
}

const LaguerreHead* head_of(const LossContext& ctx) {
  if (ctx.head == Formulation::Nmpc) return nullptr;
  if (!ctx.laguerre) throw std::invalid_argument("Laguerre head missing from the loss context");
  return ctx.laguerre;
}

LossTerms evaluate(const Matrix& raw, const TrainingBatch& batch, const LossContext& ctx, Matrix* grad_raw) {
  const LaguerreHead* head = head_of(ctx);
  LossTerms t;
  t.supervised = supervised_term(raw, head, ctx.bounds, batch, grad_raw);
  if (ctx.mode == LossMode::ConInf) {
    if (!ctx.plant) throw std::invalid_argument("the constraint loss needs a plant");
    t.constraint = constraint_term(raw, head, ctx.bounds, batch, *ctx.plant, ctx.gamma, ctx.state_box, grad_raw);
  }
  return t;
}

}  // namespace

double loss_supervised_nmpc(const MlpParams& params, const InputBounds& bounds, const TrainingBatch& batch,
                            Mode mode) {
  check_batch(batch);
  return supervised_term(forward_trunk(params, batch.states, mode), nullptr, bounds, batch, nullptr);
}

double loss_supervised_lagnmpc(const MlpParams& params, const LaguerreHead& head, const InputBounds& bounds,
                               const TrainingBatch& batch, Mode mode) {
  check_batch(batch);
  if (batch.labels.rows() != head.horizon()) throw std::invalid_argument("batch lacks full sequence labels");
  return supervised_term(forward_trunk(params, batch.states, mode), &head, bounds, batch, nullptr);
}

double loss_coninf(const MlpParams& params, const LaguerreHead* head, const InputBounds& bounds,
                   const TrainingBatch& batch, const PlantModel& plant, const Eigen::Vector2d& gamma,
                   const BoxSet& state_box, Mode mode) {
  if (batch.size() == 0) throw std::invalid_argument("loss of an empty batch");
  return constraint_term(forward_trunk(params, batch.states, mode), head, bounds, batch, plant, gamma, state_box,
                         nullptr);
}

LossTerms total_loss(const MlpParams& params, const TrainingBatch& batch, const LossContext& ctx, Mode mode) {
  check_batch(batch);
  return evaluate(forward_trunk(params, batch.states, mode), batch, ctx, nullptr);
}

LossGradient loss_and_gradient(const MlpParams& params, const TrainingBatch& batch, const LossContext& ctx,
                               Mode mode) {
  check_batch(batch);
  LossGradient out;
  const Matrix raw = forward_trunk(params, batch.states, mode, &out.cache);
  Matrix grad_raw = Matrix::Zero(raw.rows(), raw.cols());
  out.loss = evaluate(raw, batch, ctx, &grad_raw);
  out.grads = backward(params, out.cache, grad_raw);
  return out;
}

DataSplit split_rows(std::size_t n, double split, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("cannot split an empty dataset");
  if (!(split > 0 && split < 1)) throw std::invalid_argument("split fraction must lie strictly between 0 and 1");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(rows);
  std::size_t n_train = static_cast<std::size_t>(std::llround(split * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n);
  DataSplit s;
  s.train.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  return s;
}

namespace {

TrainingBatch gather(const TrainingBatch& set, const std::vector<Eigen::Index>& cols, std::size_t begin,
                     std::size_t end) {
  TrainingBatch b;
  const auto count = static_cast<Eigen::Index>(end - begin);
  b.states.resize(set.states.rows(), count);
  b.labels.resize(set.labels.rows(), count);
  for (Eigen::Index c = 0; c < count; ++c) {
    b.states.col(c) = set.states.col(cols[begin + c]);
    b.labels.col(c) = set.labels.col(cols[begin + c]);
  }
  return b;
}

}  // namespace

TrainResult train_split(const TrainingBatch& train_set, const TrainingBatch& validation_set,
                        const TrainConfig& cfg, const LossContext& ctx) {
  cfg.validate();
  check_batch(train_set);
  if (ctx.head != cfg.head) throw std::invalid_argument("loss context and config disagree on the head");
  const LaguerreHead* head = head_of(ctx);

  TrainResult result;
  result.batch_size = cfg.batch_size;
  const auto n_train = static_cast<int>(train_set.size());
  if (cfg.batch_size > n_train) {
    result.warnings.push_back("batch size " + std::to_string(cfg.batch_size) + " exceeds the " +
                              std::to_string(n_train) + " training samples; clamped");
    result.batch_size = n_train;
  }

  MlpArchitecture arch;
  arch.input_dim = static_cast<int>(train_set.states.rows());
  arch.hidden_layers = cfg.hidden_layers;
  arch.hidden_nodes = cfg.hidden_nodes;
  arch.output_dim = head ? head->size() : 1;
  // The NMPC head starts at the middle of U so the clamp passes gradients; the
  // Laguerre head starts at U_ss through a zero output bias.
  const double output_bias = head ? 0.0 : 0.5 * (ctx.bounds.lower + ctx.bounds.upper);

  NeuralPolicy& policy = result.policy;
  policy.formulation = cfg.head;
  policy.bounds = ctx.bounds;
  policy.params = init_mlp(arch, cfg.seed, output_bias);
  if (head) policy.head = *head;
  MlpParams& params = policy.params;

  AdamWOptions opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  AdamW optimizer(params, opt);

  Rng rng(Rng::mix(cfg.seed) ^ 0x53485546464c45ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    double weight = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += result.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(result.batch_size));
      // A trailing single sample has zero batch variance; skip it unless it is all there is.
      if (end - begin == 1 && order.size() > 1) continue;
      const TrainingBatch batch = gather(train_set, order, begin, end);
      const LossGradient lg = loss_and_gradient(params, batch, ctx, Mode::Train);
      optimizer.step(params, lg.grads);
      update_running_stats(params, lg.cache);
      const double w = static_cast<double>(end - begin);
      rec.train_loss += w * lg.loss.total();
      rec.supervised += w * lg.loss.supervised;
      rec.constraint += w * lg.loss.constraint;
      weight += w;
    }
    rec.train_loss /= weight;
    rec.supervised /= weight;
    rec.constraint /= weight;
    rec.val_loss = validation_set.size() > 0 ? total_loss(params, validation_set, ctx, Mode::Infer).total()
                                             : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(rec);
  }
  return result;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const PlantModel* plant, const LaguerreHead* head,
                  const InputBounds& bounds, const BoxSet& state_box) {
  cfg.validate();
  if (data.records.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  LossContext ctx;
  ctx.head = cfg.head;
  ctx.laguerre = cfg.head == Formulation::LagNmpc ? head : nullptr;
  if (cfg.head == Formulation::LagNmpc && !head) throw std::invalid_argument("the Laguerre head is required");
  ctx.bounds = bounds;
  ctx.mode = cfg.loss;
  ctx.plant = plant;
  if (cfg.loss == LossMode::ConInf && !plant) throw std::invalid_argument("the constraint loss needs a plant");
  ctx.gamma = cfg.gamma;
  ctx.state_box = state_box;

  const DataSplit split = split_rows(data.records.size(), cfg.split, cfg.seed);
  const TrainingBatch train_set = make_batch(data, cfg.head, split.train);
  const TrainingBatch validation_set = make_batch(data, cfg.head, split.validation);
  if (head && cfg.head == Formulation::LagNmpc && train_set.labels.rows() != head->horizon()) {
    throw std::invalid_argument("dataset sequences do not match the Laguerre head horizon");
  }
  return train_split(train_set, validation_set, cfg, ctx);
}

void write_history(std::ostream& out, const std::vector<EpochRecord>& history, const FileHeader& provenance) {
  write_header(out, "history", provenance);
  out << "epoch,train_loss,val_loss,supervised,constraint\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
        << format_double(r.supervised) << ',' << format_double(r.constraint) << '\n';
  }
}

}  // namespace lagnmpc
