#include "inalu/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "inalu/errors.hpp"

namespace inalu {

std::string_view to_string(Operation op) noexcept {
  switch (op) {
    case Operation::add:
      return "ADD";
    case Operation::sub:
      return "SUB";
    case Operation::mul:
      return "MUL";
    case Operation::div:
      return "DIV";
  }
  return "?";
}

Operation parse_operation(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (Operation op : kAllOperations) {
    if (upper == to_string(op)) return op;
  }
  throw ConfigError("unknown operation '" + std::string(name) + "'");
}

double apply_op(double a, double b, Operation op) noexcept {
  switch (op) {
    case Operation::add:
      return a + b;
    case Operation::sub:
      return a - b;
    case Operation::mul:
      return a * b;
    case Operation::div:
      return a / b;
  }
  return std::nan("");
}

DistributionSpec DistributionSpec::uniform(double low, double high) {
  DistributionSpec d{Kind::uniform, low, high};
  d.validate();
  return d;
}

DistributionSpec DistributionSpec::truncated_normal(double mean, double stddev) {
  DistributionSpec d{Kind::truncated_normal, mean, stddev};
  d.validate();
  return d;
}

DistributionSpec DistributionSpec::exponential(double rate) {
  DistributionSpec d{Kind::exponential, rate, 0.0};
  d.validate();
  return d;
}

void DistributionSpec::validate() const {
  switch (kind) {
    case Kind::uniform:
      if (!(p1 < p2)) throw ConfigError("uniform distribution needs low < high");
      break;
    case Kind::truncated_normal:
      if (!(p2 > 0.0)) throw ConfigError("normal distribution needs stddev > 0");
      break;
    case Kind::exponential:
      if (!(p1 > 0.0)) throw ConfigError("exponential distribution needs rate > 0");
      break;
  }
  if (!std::isfinite(p1) || !std::isfinite(p2)) {
    throw ConfigError("distribution parameters must be finite");
  }
}

double DistributionSpec::support_low() const {
  switch (kind) {
    case Kind::uniform:
      return p1;
    case Kind::truncated_normal:
      return p1 - 3.0 * p2;
    case Kind::exponential:
      return 0.0;
  }
  return 0.0;
}

double DistributionSpec::support_high() const {
  switch (kind) {
    case Kind::uniform:
      return p2;
    case Kind::truncated_normal:
      return p1 + 3.0 * p2;
    case Kind::exponential:
      return HUGE_VAL;
  }
  return HUGE_VAL;
}

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string DistributionSpec::label() const {
  switch (kind) {
    case Kind::uniform:
      return "U(" + format_number(p1) + "," + format_number(p2) + ")";
    case Kind::truncated_normal:
      return "N(" + format_number(p1) + "," + format_number(p2) + ")";
    case Kind::exponential:
      return "E(" + format_number(p1) + ")";
  }
  return "?";
}

DistributionSpec DistributionSpec::parse(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  const auto open = s.find('(');
  if (s.size() < 4 || open != 1 || s.back() != ')') {
    throw ConfigError("cannot parse distribution '" + std::string(text) + "'");
  }
  const std::string body = s.substr(2, s.size() - 3);
  std::vector<double> args;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    const auto comma = body.find(',', pos);
    const std::string part = body.substr(pos, comma == std::string::npos ? std::string::npos
                                                                         : comma - pos);
    try {
      std::size_t used = 0;
      args.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + part + "' in distribution '" + std::string(text) + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  switch (std::toupper(static_cast<unsigned char>(s[0]))) {
    case 'U':
      if (args.size() != 2) break;
      return uniform(args[0], args[1]);
    case 'N':
      if (args.size() != 2) break;
      return truncated_normal(args[0], args[1]);
    case 'E':
      if (args.size() != 1) break;
      return exponential(args[0]);
    default:
      break;
  }
  throw ConfigError("cannot parse distribution '" + std::string(text) + "'");
}

double draw(const DistributionSpec& spec, std::mt19937_64& rng) {
  switch (spec.kind) {
    case DistributionSpec::Kind::uniform:
      return std::uniform_real_distribution<double>(spec.p1, spec.p2)(rng);
    case DistributionSpec::Kind::truncated_normal: {
      std::normal_distribution<double> normal(spec.p1, spec.p2);
      const double lo = spec.support_low(), hi = spec.support_high();
      for (;;) {
        const double v = normal(rng);
        if (v >= lo && v <= hi) return v;
      }
    }
    case DistributionSpec::Kind::exponential:
      return std::exponential_distribution<double>(spec.p1)(rng);
  }
  return 0.0;
}

std::vector<double> sample(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw ConfigError("sample count must be positive");
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (double& v : out) v = draw(spec, rng);
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string_view to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::minimal:
      return "minimal";
    case TaskKind::simple:
      return "simple";
    case TaskKind::function:
      return "function";
  }
  return "?";
}

std::size_t default_input_dim(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::minimal:
      return 2;
    case TaskKind::simple:
      return 10;
    case TaskKind::function:
      return 100;
  }
  return 0;
}

std::string_view to_string(Split split) noexcept {
  return split == Split::interpolation ? "interpolation" : "extrapolation";
}

Assignment make_assignment(std::size_t input_dim, TaskKind kind, std::uint64_t seed) {
  if (input_dim != default_input_dim(kind)) {
    throw ConfigError(std::string(to_string(kind)) + " task needs " +
                      std::to_string(default_input_dim(kind)) + " inputs, got " +
                      std::to_string(input_dim));
  }
  Assignment roles(input_dim, Role::ignore);
  if (kind == TaskKind::minimal) {
    roles[0] = Role::a;
    roles[1] = Role::b;
    return roles;
  }
  std::mt19937_64 rng(derive_seed(seed, 0xA551));
  std::vector<std::size_t> order(input_dim);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_a = 1, n_b = 1;
  if (kind == TaskKind::function) {
    std::uniform_int_distribution<std::size_t> group(20, 40);
    n_a = group(rng);
    n_b = group(rng);
  }
  for (std::size_t i = 0; i < n_a; ++i) roles[order[i]] = Role::a;
  for (std::size_t i = n_a; i < n_a + n_b; ++i) roles[order[i]] = Role::b;
  return roles;
}

void validate_assignment(const Assignment& assignment, TaskKind kind) {
  const auto count = [&](Role r) {
    return static_cast<std::size_t>(std::count(assignment.begin(), assignment.end(), r));
  };
  const std::size_t n_a = count(Role::a), n_b = count(Role::b), n_i = count(Role::ignore);
  if (n_a == 0 || n_b == 0) throw ConfigError("assignment needs at least one A and one B input");
  if (assignment.size() != default_input_dim(kind)) {
    throw ConfigError("assignment length does not match task kind");
  }
  switch (kind) {
    case TaskKind::minimal:
      if (assignment[0] != Role::a || assignment[1] != Role::b) {
        throw ConfigError("minimal task assignment must be [A, B]");
      }
      break;
    case TaskKind::simple:
      if (n_a != 1 || n_b != 1) throw ConfigError("simple task needs exactly one A and one B");
      break;
    case TaskKind::function:
      if (n_i == 0) throw ConfigError("function task needs at least one ignored input");
      break;
  }
}

TaskSpec TaskSpec::make(TaskKind kind, Operation op, DistributionSpec train,
                        DistributionSpec extrap, std::uint64_t assignment_seed,
                        std::size_t sample_count) {
  TaskSpec t;
  t.kind = kind;
  t.op = op;
  t.input_dim = default_input_dim(kind);
  t.assignment = make_assignment(t.input_dim, kind, assignment_seed);
  t.train_dist = train;
  t.extrap_dist = extrap;
  t.sample_count = sample_count;
  t.validate();
  return t;
}

void TaskSpec::validate() const {
  if (sample_count == 0) throw ConfigError("sample count must be positive");
  if (input_dim != assignment.size()) throw ConfigError("input_dim does not match assignment");
  validate_assignment(assignment, kind);
  train_dist.validate();
  extrap_dist.validate();
  if (extrap_dist_alt) extrap_dist_alt->validate();
}

std::pair<double, double> operands(std::span<const double> row, const Assignment& assignment) {
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == Role::a) a += row[i];
    if (assignment[i] == Role::b) b += row[i];
  }
  return {a, b};
}

Dataset build_dataset(const TaskSpec& task, Split split, std::uint64_t seed) {
  return build_dataset(task, split == Split::interpolation ? task.train_dist : task.extrap_dist,
                       split, seed);
}

Dataset build_dataset(const TaskSpec& task, const DistributionSpec& dist, Split split,
                      std::uint64_t seed) {
  task.validate();
  dist.validate();
  const std::size_t n = task.sample_count, dim = task.input_dim;
  Dataset ds;
  ds.split = split;
  ds.x = Tensor(n, dim);
  ds.y = Tensor(n, 1);
  std::mt19937_64 rng(derive_seed(seed, split == Split::interpolation ? 1 : 2));
  std::vector<double> row(dim);
  for (std::size_t r = 0; r < n; ++r) {
    int attempts = 0;
    for (;;) {
      for (double& v : row) v = draw(dist, rng);
      const auto [a, b] = operands(row, task.assignment);
      if (task.op != Operation::div || std::fabs(b) >= kMinDivisor) {
        ds.y(r, 0) = apply_op(a, b, task.op);
        break;
      }
      if (++attempts >= kMaxResampleAttempts) {
        throw ConfigError("could not draw a divisor with |b| >= 1e-3 from " + dist.label());
      }
    }
    std::copy(row.begin(), row.end(), ds.x.values().begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  return ds;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  const std::size_t dim = data.x.cols();
  for (std::size_t c = 0; c < dim; ++c) out << 'x' << c << ',';
  out << "y\n";
  char buf[32];
  for (std::size_t r = 0; r < data.x.rows(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.x(r, c));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.y(r, 0));
    out << buf << '\n';
  }
}

}  // namespace inalu
