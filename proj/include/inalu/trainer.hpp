#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inalu/cells.hpp"
#include "inalu/datagen.hpp"
#include "inalu/regularization.hpp"

namespace inalu {

struct NormalInit {
  double mean = 0.0;
  double stddev = 0.5;
};

/// Per-group normal initialization for G, M_hat and W_hat.
struct InitSpec {
  NormalInit gate{0.0, 0.5};
  NormalInit m_hat{-1.0, 0.5};
  NormalInit w_hat{1.0, 0.5};

  void validate() const;
  /// "(0,-1,1)/(0.5,0.5,0.5)": means then standard deviations, G M W order.
  std::string label() const;
};

/// Layer widths from input to output, e.g. {100, 2, 1}.
struct Architecture {
  CellVariant variant = CellVariant::inalu_independent_weights;
  std::vector<std::size_t> widths{2, 1};

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  int epochs = 100;
  /// Mini-batch steps per epoch; 0 means one pass over the training set.
  /// A fixed count keeps every epoch-based schedule (regularizer start,
  /// reinitialization cadence) tied to the same number of optimizer steps
  /// when the dataset is smaller than the full 64000 samples. Passes over
  /// the data wrap around with a fresh shuffle.
  std::size_t steps_per_epoch = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 0.1;
  int reinit_check_every_epochs = 10;
  std::size_t reinit_stale_steps = 10000;
  double reinit_loss_threshold = 1.0;
  int max_reinits = 9;
  InitSpec init;
  CellHyper hyper;
  RegConfig reg;
  /// Ablation switch for the regularizer.
  bool regularize = true;
  /// Regularization and reinitialization are iNALU training features; this
  /// extends them to the original NALU variants as well.
  bool improvements_for_baseline = false;
  std::size_t eval_chunk_rows = 4096;

  void validate() const;
};

/// Draws every entry from its group's normal distribution.
CellParams init_layer(CellVariant variant, std::size_t in, std::size_t out,
                      const InitSpec& init, std::mt19937_64& rng);
Model init_params(const Architecture& arch, const InitSpec& init, std::uint64_t seed);

/// Adam moments for a fixed list of parameter tensors.
struct OptimizerState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;

  static OptimizerState for_params(std::span<Tensor* const> params);
};

/// Bias-corrected Adam update, in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               OptimizerState& state, const TrainConfig& cfg);

double global_norm(std::span<const Tensor> grads) noexcept;

/// Rescales all gradients together so their global L2 norm is at most
/// max_norm. Returns the norm before clipping.
double clip_gradients(std::span<Tensor> grads, double max_norm);

/// Reinitialization fires at epochs that are multiples of
/// reinit_check_every_epochs when the best loss of the last
/// reinit_stale_steps steps is no better than the best loss before them and
/// the recent mean loss (last 100 steps) exceeds reinit_loss_threshold.
/// With no history before the window, the first recorded loss stands in for
/// "the best loss before". `epoch` is 1-based.
bool should_reinitialize(int epoch, std::span<const double> loss_history,
                         const TrainConfig& cfg);

struct ProgressLine {
  int epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  bool reg_active = false;
  int reinit_count = 0;
};

/// "progress <label> epoch=<e> step=<s> loss=<%.6e> reg=<0|1> reinit=<n>"
std::string format_progress(const ProgressLine& line, const std::string& label);

struct TrainReport {
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  double interp_mse = 0.0;
  /// Over all extrapolation samples (both ranges when the task has two).
  double extrap_mse = 0.0;
  /// Per extrapolation range, in task order.
  std::vector<double> extrap_parts;
  int reinit_count = 0;
  int epochs_run = 0;
  std::optional<int> reg_activation_epoch;
  std::uint64_t seed = 0;
  /// Fraction of W_hat/M_hat/G entries with |w| < 1.
  std::optional<double> small_weight_fraction_at_reg_activation;
  double final_small_weight_fraction = 0.0;
  bool failed = false;
  std::string diagnostic;
  Model params;
};

struct TrainOptions {
  /// Start from these parameters instead of a random draw.
  std::optional<Model> initial_params;
  /// Called once per epoch.
  std::function<void(const ProgressLine&)> progress;
};

/// Mini-batch Adam on data MSE, plus the regularizer once active. Runs are
/// reproducible per seed; datasets depend only on (task, seed), so variants
/// trained with the same seed see identical data. Non-finite iNALU values
/// end the run with failed = true and a diagnostic.
TrainReport train(const Architecture& arch, const TaskSpec& task, const TrainConfig& cfg,
                  std::uint64_t seed, const TrainOptions& options = {});

/// MSE of the model over the whole dataset, evaluated in row chunks.
double evaluate(const Model& model, const CellHyper& hyper, const Dataset& data,
                std::size_t chunk_rows = 4096);

/// Mean squared error over several datasets taken together.
double evaluate_union(const Model& model, const CellHyper& hyper,
                      std::span<const Dataset> parts, std::size_t chunk_rows = 4096);

double small_weight_fraction(const Model& model, double below = 1.0);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Entries within the kink radius of a non-smooth point.
  std::size_t skipped = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  double kink_radius = 1e-3;
  /// Include the regularizer in the checked loss.
  std::optional<RegConfig> reg = RegConfig{};
};

/// Relative error |a - n| / max(|a|, |n|, 1e-6 * max(1, |loss|)) between
/// analytic and central-difference gradients of MSE(model(x), y) [+ reg],
/// for every parameter entry. An entry is skipped when moving it by
/// +-kink_radius changes the branch taken at any abs/sign/min/max.
GradCheckReport gradient_check(const Model& model, const Tensor& x, const Tensor& y,
                               const CellHyper& hyper, const GradCheckOptions& options = {});

struct GradCheckDims {
  std::size_t in = 2;
  std::size_t out = 1;
  std::size_t batch = 4;
  std::size_t layers = 1;
  /// Draw inputs with magnitudes in [1e3, 1e6] so the omega clip engages.
  bool large_inputs = false;
};

/// Random instance: N(0,1) parameters, inputs with magnitude in [0.2, 2]
/// (or the large range) and random signs, N(0,1) targets.
GradCheckReport gradient_check(CellVariant variant, const GradCheckDims& dims,
                               std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace inalu
