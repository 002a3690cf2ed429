#pragma once

// Synthetic arithmetic tasks: y = a (op) b, where a and b are sums over
// fixed, randomly chosen groups of input columns.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inalu/tensor.hpp"

namespace inalu {

enum class Operation { add, sub, mul, div };

inline constexpr Operation kAllOperations[] = {Operation::add, Operation::sub, Operation::mul,
                                               Operation::div};

std::string_view to_string(Operation op) noexcept;
/// Accepts ADD/SUB/MUL/DIV in any case.
Operation parse_operation(std::string_view name);

/// Plain IEEE arithmetic; division by zero is left to the caller.
double apply_op(double a, double b, Operation op) noexcept;

/// Divisors smaller than this are resampled when building DIV datasets.
inline constexpr double kMinDivisor = 1e-3;
inline constexpr int kMaxResampleAttempts = 1000;

struct DistributionSpec {
  enum class Kind { uniform, truncated_normal, exponential };

  Kind kind = Kind::uniform;
  // uniform: (low, high); truncated_normal: (mean, stddev); exponential: (rate, unused)
  double p1 = 0.0;
  double p2 = 1.0;

  static DistributionSpec uniform(double low, double high);
  /// Normal truncated to [mean - 3 stddev, mean + 3 stddev].
  static DistributionSpec truncated_normal(double mean, double stddev);
  static DistributionSpec exponential(double rate);

  /// "U(-3,3)", "N(0,1)", "E(0.2)".
  static DistributionSpec parse(std::string_view text);
  std::string label() const;

  void validate() const;
  double support_low() const;
  double support_high() const;

  friend bool operator==(const DistributionSpec&, const DistributionSpec&) = default;
};

/// One draw. The engine is advanced a variable number of times for the
/// truncated normal (rejection).
double draw(const DistributionSpec& spec, std::mt19937_64& rng);

/// n independent draws, reproducible per seed.
std::vector<double> sample(const DistributionSpec& spec, std::size_t n, std::uint64_t seed);

/// splitmix64-style mixing used to derive independent streams from one seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

enum class TaskKind { minimal, simple, function };

std::string_view to_string(TaskKind kind) noexcept;
std::size_t default_input_dim(TaskKind kind) noexcept;

enum class Role : std::uint8_t { a, b, ignore };
using Assignment = std::vector<Role>;

/// minimal: [A, B]. simple: one A, one B, the rest ignored. function: |A| and
/// |B| drawn uniformly from [20, 40] on disjoint random positions, the rest
/// ignored.
Assignment make_assignment(std::size_t input_dim, TaskKind kind, std::uint64_t seed);

/// Throws ConfigError unless the assignment fits the task kind.
void validate_assignment(const Assignment& assignment, TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::minimal;
  Operation op = Operation::add;
  std::size_t input_dim = 2;
  Assignment assignment;
  DistributionSpec train_dist;
  DistributionSpec extrap_dist;
  /// Second extrapolation range, evaluated separately (function task).
  std::optional<DistributionSpec> extrap_dist_alt;
  std::size_t sample_count = 64000;

  static TaskSpec make(TaskKind kind, Operation op, DistributionSpec train,
                       DistributionSpec extrap, std::uint64_t assignment_seed,
                       std::size_t sample_count = 64000);

  void validate() const;
};

enum class Split { interpolation, extrapolation };

std::string_view to_string(Split split) noexcept;

struct Dataset {
  Tensor x;
  Tensor y;
  Split split = Split::interpolation;
};

/// a and b for one input row.
std::pair<double, double> operands(std::span<const double> row, const Assignment& assignment);

/// Draws from train_dist (interpolation) or extrap_dist (extrapolation).
Dataset build_dataset(const TaskSpec& task, Split split, std::uint64_t seed);

/// Same with an explicit input distribution.
Dataset build_dataset(const TaskSpec& task, const DistributionSpec& dist, Split split,
                      std::uint64_t seed);

/// Header "x0,...,x{n-1},y", one sample per line, %.17g values.
void write_dataset_csv(std::ostream& out, const Dataset& data);

}  // namespace inalu
