#pragma once

#include "lagnmpc/mlp.hpp"
#include "lagnmpc/plant.hpp"
#include "lagnmpc/sampling.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lagnmpc {

enum class LossMode { Supervised, ConInf };

std::string_view to_string(LossMode m);
LossMode parse_loss_mode(std::string_view s);

struct TrainConfig {
  int epochs = 1000;
  double lr = 1e-4;
  double weight_decay = 1e-2;
  int batch_size = 1024;
  double split = 0.7;  // training fraction
  Eigen::Vector2d gamma{1.0, 0.1};  // diagonal of the violation weighting
  LossMode loss = LossMode::Supervised;
  Formulation head = Formulation::LagNmpc;
  int hidden_layers = 2;
  int hidden_nodes = 20;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Samples as columns. `labels` holds u* (1 x B) for the NMPC head and the
/// full sequences U* (N x B) for the Laguerre head.
struct TrainingBatch {
  Matrix states;
  Matrix labels;

  Eigen::Index size() const { return states.cols(); }
};

TrainingBatch make_batch(const Dataset& data, Formulation head, const std::vector<std::size_t>& rows);
TrainingBatch make_batch(const Dataset& data, Formulation head);

/// Everything a loss needs besides the parameters and the batch.
struct LossContext {
  Formulation head = Formulation::LagNmpc;
  const LaguerreHead* laguerre = nullptr;  // required for the Laguerre head
  InputBounds bounds;
  LossMode mode = LossMode::Supervised;
  const PlantModel* plant = nullptr;  // required for ConInf
  Eigen::Vector2d gamma{1.0, 0.1};
  BoxSet state_box = default_state_box();
};

struct LossTerms {
  double supervised = 0.0;
  double constraint = 0.0;
  double total() const { return supervised + constraint; }
};

double loss_supervised_nmpc(const MlpParams& params, const InputBounds& bounds,
                            const TrainingBatch& batch, Mode mode = Mode::Infer);
double loss_supervised_lagnmpc(const MlpParams& params, const LaguerreHead& head,
                               const InputBounds& bounds, const TrainingBatch& batch,
                               Mode mode = Mode::Infer);
/// One-step state violation of the first input, Gamma-weighted and batch averaged.
/// `head` selects the Laguerre first-input head; null means the NMPC head.
double loss_coninf(const MlpParams& params, const LaguerreHead* head, const InputBounds& bounds,
                   const TrainingBatch& batch, const PlantModel& plant, const Eigen::Vector2d& gamma,
                   const BoxSet& state_box, Mode mode = Mode::Infer);

/// Violation vector max(0, x - x_max) + min(0, x - x_min).
Vector state_violation(ConstVectorRef x, const BoxSet& box);

LossTerms total_loss(const MlpParams& params, const TrainingBatch& batch, const LossContext& ctx,
                     Mode mode = Mode::Infer);

struct LossGradient {
  LossTerms loss;
  MlpParams grads;
  ForwardCache cache;
};

/// Loss terms plus exact gradients of their sum.
LossGradient loss_and_gradient(const MlpParams& params, const TrainingBatch& batch,
                               const LossContext& ctx, Mode mode = Mode::Train);

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded permutation; the first round(split * n) rows train (at least one).
DataSplit split_rows(std::size_t n, double split, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean of the minibatch losses (train mode)
  double val_loss = 0.0;    // validation total loss (infer mode), NaN without validation rows
  double supervised = 0.0;  // minibatch mean of the supervised term
  double constraint = 0.0;  // minibatch mean of the violation term
};

struct TrainResult {
  NeuralPolicy policy;
  std::vector<EpochRecord> history;
  std::vector<std::string> warnings;
  int batch_size = 0;  // after clamping to the training set size
};

/// Trains on an explicit split. Only `train_set` drives parameter updates.
TrainResult train_split(const TrainingBatch& train_set, const TrainingBatch& validation_set,
                        const TrainConfig& cfg, const LossContext& ctx);

/// Seeded split of the dataset, then train_split. `plant` is needed for ConInf,
/// `head` for the Laguerre formulation.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const PlantModel* plant,
                  const LaguerreHead* head, const InputBounds& bounds = {},
                  const BoxSet& state_box = default_state_box());

void write_history(std::ostream& out, const std::vector<EpochRecord>& history,
                   const FileHeader& provenance = {});

}  // namespace lagnmpc
