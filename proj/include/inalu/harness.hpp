#pragma once

// Experiment runner: enumerates (variant x operation x distribution pair x
// init x seed) runs, executes them on an OpenMP worker pool and writes one
// result row per run.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inalu/trainer.hpp"

namespace inalu {

inline constexpr double kSuccessThreshold = 1e-4;
/// Init-grid table: a configuration counts as stable when the worst run
/// stays below this.
inline constexpr double kInitGridThreshold = 1e-3;
inline constexpr std::size_t kDefaultSampleCount = 64000;
inline constexpr const char* kLibraryVersion = "1.0.0";

enum class ExperimentId { exp1, exp2, exp3, exp4, gradcheck };

std::string_view to_string(ExperimentId id) noexcept;
ExperimentId parse_experiment(std::string_view name);

struct DistributionPair {
  DistributionSpec train;
  DistributionSpec extrap;
  std::optional<DistributionSpec> extrap_alt;

  /// "U(-3,3)->U(-5,5)"; a second range is joined with '|'.
  std::string extrap_label() const;
  /// One per line: "U(-3,3) -> U(-5,5)" or "U(-3,3) -> U(3,4) | U(-5,-3)".
  static DistributionPair parse(std::string_view line);
};

/// Default (train, extrapolation) grid for the minimal and simple tasks.
/// Approximates the ranges shown on the published figure axes.
std::vector<DistributionPair> default_arithmetic_grid();
/// Training on [-3, 3]; extrapolation on [3, 4] and [-5, -3].
std::vector<DistributionPair> function_task_grid();
/// Truncated-normal half of function_task_grid().
std::vector<DistributionPair> init_grid_distribution();

/// Reads pairs one per line; '#' starts a comment.
std::vector<DistributionPair> read_grid(std::istream& in);

/// Every combination of group means from `means` and stddevs from `stddevs`.
std::vector<InitSpec> init_search_space(const std::vector<double>& means,
                                        const std::vector<double>& stddevs);

struct ExperimentConfig {
  ExperimentId id = ExperimentId::exp1;
  std::vector<CellVariant> variants;
  std::vector<Operation> operations;
  std::vector<DistributionPair> grid;
  /// Initializations to sweep; empty means train.init only.
  std::vector<InitSpec> init_grid;
  std::size_t seed_count = 10;
  std::uint64_t base_seed = 0;
  std::optional<std::size_t> sample_count_override;
  std::size_t hidden_width = 2;
  TrainConfig train;
  int workers = 1;
  std::string output_path;
  bool progress = false;

  /// Full-scale defaults for each experiment.
  static ExperimentConfig defaults(ExperimentId id);

  void validate() const;
  std::vector<std::uint64_t> seeds() const;
  std::size_t sample_count() const;
};

struct ResultRecord {
  std::string experiment_id;
  CellVariant variant = CellVariant::inalu_independent_weights;
  Operation operation = Operation::add;
  std::string train_dist;
  std::string extrap_dist;
  InitSpec init_spec;
  std::uint64_t seed = 0;
  double interp_mse = 0.0;
  double extrap_mse = 0.0;
  bool success = false;
  int reinit_count = 0;
  int epochs_run = 0;
  double wall_time_seconds = 0.0;
  std::vector<double> extrap_parts;
  /// "ok" or "failed"; failed rows carry a diagnostic.
  std::string status = "ok";
  std::string diagnostic;
};

/// Run index order: variant, operation, grid entry, init entry, seed.
std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg);

std::vector<ResultRecord> run_exp1(const ExperimentConfig& cfg);
std::vector<ResultRecord> run_exp2(const ExperimentConfig& cfg);
std::vector<ResultRecord> run_exp4(const ExperimentConfig& cfg);

struct InitGridCell {
  double max_extrap_mse = 0.0;
  bool stable = false;
  double success_fraction = 0.0;
  std::size_t runs = 0;
};

/// One row per combination of group means (stddevs consolidated).
struct InitGridRow {
  double gate_mean = 0.0;
  double m_hat_mean = 0.0;
  double w_hat_mean = 0.0;
  std::map<Operation, InitGridCell> cells;
};

/// Worst extrapolation MSE over every run sharing the same means, per
/// operation. Failed runs count as NaN and make the cell unstable.
std::vector<InitGridRow> aggregate_init_grid(const std::vector<ResultRecord>& records);

struct Exp3Result {
  std::vector<ResultRecord> records;
  std::vector<InitGridRow> table;
};
Exp3Result run_exp3(const ExperimentConfig& cfg);

/// Column order of the results table.
const std::vector<std::string>& result_header();

/// Writes the results table (CSV, quoted where needed) plus
/// "<path>.timing.csv" with per-run wall times. Values use %.5e. Throws
/// ConfigError on an empty list (nothing is written) and std::runtime_error
/// when the path is not writable.
void write_results(const std::vector<ResultRecord>& records, const std::string& path);
void write_results(const std::vector<ResultRecord>& records, std::ostream& out);

/// "<path>.meta.json": configuration, library version and fixed constants.
void write_metadata(const ExperimentConfig& cfg, const std::string& path);

void write_init_grid_table(const std::vector<InitGridRow>& rows,
                           const std::vector<Operation>& operations, std::ostream& out);

std::vector<ResultRecord> read_results(std::istream& in);

/// Seed-level records summarized per (variant, operation, distribution,
/// init): success count and mean/median/max extrapolation MSE.
struct CellSummary {
  std::string key;
  std::size_t runs = 0;
  std::size_t successes = 0;
  double mean_extrap_mse = 0.0;
  double median_extrap_mse = 0.0;
  double max_extrap_mse = 0.0;
};
std::vector<CellSummary> summarize(const std::vector<ResultRecord>& records);

struct GradCheckRow {
  CellVariant variant = CellVariant::inalu_independent_weights;
  std::size_t instance = 0;
  GradCheckDims dims;
  GradCheckReport report;
};

/// `instances` random small problems per variant, cycling through input
/// widths 1-4, output widths 1-3, batches 1-8, one or two layers and both
/// input magnitude ranges (large inputs with a single layer).
std::vector<GradCheckRow> run_gradcheck(const std::vector<CellVariant>& variants,
                                        std::size_t instances, std::uint64_t base_seed);
void write_gradcheck(const std::vector<GradCheckRow>& rows, std::ostream& out);

}  // namespace inalu
