#pragma once

#include "lagnmpc/config.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lagnmpc {

/// Central-difference check of loss_and_gradient over every trainable entry.
struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  int checked = 0;
  int skipped = 0;  // perturbation crossed a ReLU, clamp, or violation kink
};

/// Relative error is |fd - bp| / max(|fd|, |bp|, floor).
GradientCheck check_gradients(const MlpParams& params, const TrainingBatch& batch, const LossContext& ctx,
                              double step = 1e-6, double floor = 1e-4);

/// Random network whose batch norm statistics and affine maps are all nontrivial.
MlpParams random_mlp(const MlpArchitecture& arch, std::uint64_t seed, double scale = 1.0);

struct CriterionResult {
  std::string id;
  std::string title;
  bool passed = false;
  bool gating = true;  // informational lines do not affect the verdict
  std::string detail;
  double seconds = 0.0;
};

std::string format_result(const CriterionResult& r);

/// The acceptance criteria, sharing trained artifacts between checks.
class AcceptanceSuite {
 public:
  /// `work_dir` receives the files of the determinism check.
  AcceptanceSuite(RunConfig cfg, std::string work_dir);
  ~AcceptanceSuite();

  CriterionResult steady_state();
  CriterionResult laguerre_equivalence();
  CriterionResult laguerre_properties();
  CriterionResult gradient_oracle();
  CriterionResult hard_input_constraint();
  CriterionResult coninf_effect();
  CriterionResult closed_loop();
  /// Same check as closed_loop() over a longer horizon; never gating.
  CriterionResult closed_loop_extended(int steps);
  CriterionResult offset_free();
  CriterionResult fixed_point();
  CriterionResult determinism();

  /// Fast subset that needs no training run.
  std::vector<CriterionResult> run_quick(std::ostream* progress = nullptr);
  std::vector<CriterionResult> run_all(std::ostream* progress = nullptr);

 private:
  struct Artifacts;
  /// Networks at the reduced budget of the ConInf comparison.
  Artifacts& trained();
  /// ConInf LagNMPC network at the configured sample count and epochs.
  const NeuralPolicy& full_coninf();

  RunConfig cfg_;
  std::string work_dir_;
  std::unique_ptr<Artifacts> artifacts_;
  std::optional<NeuralPolicy> full_;
  double full_seconds_ = 0.0;
};

/// Number of failing gating results.
int failures(const std::vector<CriterionResult>& results);

}  // namespace lagnmpc
