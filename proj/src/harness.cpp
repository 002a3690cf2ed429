#include "inalu/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

#include "inalu/errors.hpp"

namespace inalu {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5e", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ConfigError("bad number '" + s + "' in results table");
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

InitSpec parse_init_label(const std::string& label) {
  InitSpec s;
  if (std::sscanf(label.c_str(), "(%lf,%lf,%lf)/(%lf,%lf,%lf)", &s.gate.mean, &s.m_hat.mean,
                  &s.w_hat.mean, &s.gate.stddev, &s.m_hat.stddev, &s.w_hat.stddev) != 6) {
    throw ConfigError("bad init label '" + label + "'");
  }
  return s;
}

TaskKind task_kind(ExperimentId id) {
  switch (id) {
    case ExperimentId::exp1:
      return TaskKind::minimal;
    case ExperimentId::exp2:
      return TaskKind::simple;
    case ExperimentId::exp3:
    case ExperimentId::exp4:
      return TaskKind::function;
    case ExperimentId::gradcheck:
      break;
  }
  throw ConfigError("experiment has no task");
}

struct Job {
  std::size_t variant;
  std::size_t operation;
  std::size_t pair;
  std::size_t init;
  std::size_t seed;
};

std::mutex& output_mutex() {
  static std::mutex m;
  return m;
}

ResultRecord run_job(const ExperimentConfig& cfg, const Job& job,
                     const std::vector<std::uint64_t>& seeds) {
  const auto start = std::chrono::steady_clock::now();
  ResultRecord rec;
  rec.experiment_id = std::string(to_string(cfg.id));
  rec.variant = cfg.variants[job.variant];
  rec.operation = cfg.operations[job.operation];
  const DistributionPair& pair = cfg.grid[job.pair];
  rec.train_dist = pair.train.label();
  rec.extrap_dist = pair.extrap_label();
  rec.seed = seeds[job.seed];

  TrainConfig tc = cfg.train;
  if (!cfg.init_grid.empty()) tc.init = cfg.init_grid[job.init];
  rec.init_spec = tc.init;

  try {
    const TaskKind kind = task_kind(cfg.id);
    TaskSpec task = TaskSpec::make(kind, rec.operation, pair.train, pair.extrap,
                                   derive_seed(rec.seed, 1), cfg.sample_count());
    task.extrap_dist_alt = pair.extrap_alt;
    Architecture arch;
    arch.variant = rec.variant;
    arch.widths = {task.input_dim};
    if (kind == TaskKind::function) arch.widths.push_back(cfg.hidden_width);
    arch.widths.push_back(1);

    TrainOptions options;
    if (cfg.progress) {
      const std::string label = "run=" + rec.experiment_id + ":" +
                                std::string(to_string(rec.variant)) + ":" +
                                std::string(to_string(rec.operation)) + ":" + rec.train_dist +
                                ":" + tc.init.label() + ":seed=" + std::to_string(rec.seed);
      options.progress = [label](const ProgressLine& line) {
        const std::string text = format_progress(line, label);
        std::lock_guard<std::mutex> lock(output_mutex());
        std::cout << text << '\n' << std::flush;
      };
    }

    const TrainReport report = train(arch, task, tc, rec.seed, options);
    rec.interp_mse = report.interp_mse;
    rec.extrap_mse = report.extrap_mse;
    rec.extrap_parts = report.extrap_parts;
    rec.reinit_count = report.reinit_count;
    rec.epochs_run = report.epochs_run;
    if (report.failed) {
      rec.status = "failed";
      rec.diagnostic = report.diagnostic;
    }
  } catch (const std::exception& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.interp_mse = rec.extrap_mse = nan;
    rec.status = "failed";
    rec.diagnostic = e.what();
  }
  rec.success = rec.extrap_mse <= kSuccessThreshold;
  rec.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

nlohmann::json init_json(const InitSpec& s) {
  return {{"gate", {{"mean", s.gate.mean}, {"stddev", s.gate.stddev}}},
          {"m_hat", {{"mean", s.m_hat.mean}, {"stddev", s.m_hat.stddev}}},
          {"w_hat", {{"mean", s.w_hat.mean}, {"stddev", s.w_hat.stddev}}}};
}

}  // namespace

std::string_view to_string(ExperimentId id) noexcept {
  switch (id) {
    case ExperimentId::exp1:
      return "exp1";
    case ExperimentId::exp2:
      return "exp2";
    case ExperimentId::exp3:
      return "exp3";
    case ExperimentId::exp4:
      return "exp4";
    case ExperimentId::gradcheck:
      return "gradcheck";
  }
  return "?";
}

ExperimentId parse_experiment(std::string_view name) {
  for (ExperimentId id : {ExperimentId::exp1, ExperimentId::exp2, ExperimentId::exp3,
                          ExperimentId::exp4, ExperimentId::gradcheck}) {
    if (name == to_string(id)) return id;
  }
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

std::string DistributionPair::extrap_label() const {
  std::string s = extrap.label();
  if (extrap_alt) s += "|" + extrap_alt->label();
  return s;
}

DistributionPair DistributionPair::parse(std::string_view line) {
  const auto arrow = line.find("->");
  if (arrow == std::string_view::npos) {
    throw ConfigError("grid line needs 'train -> extrapolation': " + std::string(line));
  }
  DistributionPair p;
  p.train = DistributionSpec::parse(trim(line.substr(0, arrow)));
  const std::string rest = trim(line.substr(arrow + 2));
  const auto bar = rest.find('|');
  p.extrap = DistributionSpec::parse(trim(rest.substr(0, bar)));
  if (bar != std::string::npos) p.extrap_alt = DistributionSpec::parse(trim(rest.substr(bar + 1)));
  return p;
}

std::vector<DistributionPair> default_arithmetic_grid() {
  return {
      {DistributionSpec::uniform(-3, 3), DistributionSpec::uniform(-5, 5), std::nullopt},
      {DistributionSpec::uniform(0, 3), DistributionSpec::uniform(3, 5), std::nullopt},
      {DistributionSpec::truncated_normal(0, 1), DistributionSpec::truncated_normal(3, 1),
       std::nullopt},
      {DistributionSpec::truncated_normal(-4, 2), DistributionSpec::truncated_normal(4, 2),
       std::nullopt},
      {DistributionSpec::exponential(0.2), DistributionSpec::exponential(0.1), std::nullopt},
      {DistributionSpec::exponential(0.8), DistributionSpec::exponential(0.4), std::nullopt},
  };
}

std::vector<DistributionPair> function_task_grid() {
  // truncated normals whose +-3 sigma support is exactly the target interval
  return {
      {DistributionSpec::uniform(-3, 3), DistributionSpec::uniform(3, 4),
       DistributionSpec::uniform(-5, -3)},
      {DistributionSpec::truncated_normal(0, 1), DistributionSpec::truncated_normal(3.5, 1.0 / 6.0),
       DistributionSpec::truncated_normal(-4, 1.0 / 3.0)},
  };
}

std::vector<DistributionPair> init_grid_distribution() { return {function_task_grid()[1]}; }

std::vector<DistributionPair> read_grid(std::istream& in) {
  std::vector<DistributionPair> grid;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    const std::string body = trim(line.substr(0, hash));
    if (!body.empty()) grid.push_back(DistributionPair::parse(body));
  }
  if (grid.empty()) throw ConfigError("distribution grid is empty");
  return grid;
}

std::vector<InitSpec> init_search_space(const std::vector<double>& means,
                                        const std::vector<double>& stddevs) {
  if (means.empty() || stddevs.empty()) throw ConfigError("empty initialization search space");
  std::vector<InitSpec> out;
  for (double mg : means)
    for (double mm : means)
      for (double mw : means)
        for (double sg : stddevs)
          for (double sm : stddevs)
            for (double sw : stddevs) {
              InitSpec s{{mg, sg}, {mm, sm}, {mw, sw}};
              s.validate();
              out.push_back(s);
            }
  return out;
}

ExperimentConfig ExperimentConfig::defaults(ExperimentId id) {
  ExperimentConfig cfg;
  cfg.id = id;
  cfg.variants.assign(std::begin(kAllVariants), std::end(kAllVariants));
  cfg.operations.assign(std::begin(kAllOperations), std::end(kAllOperations));
  // An epoch is always the number of steps a full 64000-sample pass takes.
  cfg.train.steps_per_epoch = kDefaultSampleCount / cfg.train.batch_size;
  switch (id) {
    case ExperimentId::exp1:
    case ExperimentId::exp2:
      cfg.grid = default_arithmetic_grid();
      break;
    case ExperimentId::exp3:
      cfg.variants = {CellVariant::inalu_shared_weights};
      cfg.grid = init_grid_distribution();
      cfg.init_grid = init_search_space({-1.0, 0.0, 1.0}, {0.1, 0.5});
      cfg.seed_count = 20;
      break;
    case ExperimentId::exp4:
      cfg.grid = function_task_grid();
      break;
    case ExperimentId::gradcheck:
      cfg.seed_count = 100;
      break;
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  if (variants.empty()) throw ConfigError("no model variants configured");
  if (seed_count == 0) throw ConfigError("no seeds configured");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (id == ExperimentId::gradcheck) return;
  if (operations.empty()) throw ConfigError("no operations configured");
  if (grid.empty()) throw ConfigError("no distribution pairs configured");
  if (hidden_width == 0) throw ConfigError("hidden width must be positive");
  if (sample_count_override && *sample_count_override == 0) {
    throw ConfigError("sample count must be positive");
  }
  if (id == ExperimentId::exp3) {
    for (CellVariant v : variants) {
      if (v != CellVariant::inalu_shared_weights) {
        throw ConfigError("the initialization grid uses inalu_shared_weights only");
      }
    }
  }
  for (const InitSpec& s : init_grid) s.validate();
  train.validate();
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  std::vector<std::uint64_t> out(seed_count);
  for (std::size_t i = 0; i < seed_count; ++i) out[i] = base_seed + i;
  return out;
}

std::size_t ExperimentConfig::sample_count() const {
  return sample_count_override.value_or(kDefaultSampleCount);
}

std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.id == ExperimentId::gradcheck) {
    throw ConfigError("gradcheck produces no training records; use run_gradcheck");
  }
  const std::vector<std::uint64_t> seeds = cfg.seeds();
  const std::size_t inits = std::max<std::size_t>(1, cfg.init_grid.size());
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < cfg.variants.size(); ++v)
    for (std::size_t o = 0; o < cfg.operations.size(); ++o)
      for (std::size_t p = 0; p < cfg.grid.size(); ++p)
        for (std::size_t i = 0; i < inits; ++i)
          for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({v, o, p, i, s});

  // Each slot is written by exactly one iteration, so the output order is
  // the job order no matter which worker finishes first.
  std::vector<ResultRecord> records(jobs.size());
  const auto count = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(cfg.workers)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    records[static_cast<std::size_t>(j)] = run_job(cfg, jobs[static_cast<std::size_t>(j)], seeds);
  }
  return records;
}

std::vector<ResultRecord> run_exp1(const ExperimentConfig& cfg) {
  if (cfg.id != ExperimentId::exp1) throw ConfigError("run_exp1 needs an exp1 configuration");
  return run_experiment(cfg);
}

std::vector<ResultRecord> run_exp2(const ExperimentConfig& cfg) {
  if (cfg.id != ExperimentId::exp2) throw ConfigError("run_exp2 needs an exp2 configuration");
  return run_experiment(cfg);
}

std::vector<ResultRecord> run_exp4(const ExperimentConfig& cfg) {
  if (cfg.id != ExperimentId::exp4) throw ConfigError("run_exp4 needs an exp4 configuration");
  return run_experiment(cfg);
}

std::vector<InitGridRow> aggregate_init_grid(const std::vector<ResultRecord>& records) {
  std::vector<InitGridRow> rows;
  std::map<Operation, std::vector<std::size_t>> unused;
  auto find_row = [&rows](const InitSpec& s) -> InitGridRow& {
    for (InitGridRow& r : rows) {
      if (r.gate_mean == s.gate.mean && r.m_hat_mean == s.m_hat.mean &&
          r.w_hat_mean == s.w_hat.mean) {
        return r;
      }
    }
    rows.push_back({s.gate.mean, s.m_hat.mean, s.w_hat.mean, {}});
    return rows.back();
  };
  std::map<std::tuple<std::size_t, Operation>, std::size_t> stable_runs;
  for (const ResultRecord& rec : records) {
    InitGridRow& row = find_row(rec.init_spec);
    InitGridCell& cell = row.cells[rec.operation];
    const double mse = std::isnan(rec.extrap_mse) ? HUGE_VAL : rec.extrap_mse;
    cell.max_extrap_mse = cell.runs == 0 ? mse : std::max(cell.max_extrap_mse, mse);
    // success_fraction temporarily holds the count of runs under the threshold
    cell.success_fraction += mse < kInitGridThreshold ? 1.0 : 0.0;
    ++cell.runs;
  }
  for (InitGridRow& row : rows) {
    for (auto& [op, cell] : row.cells) {
      cell.stable = cell.max_extrap_mse < kInitGridThreshold;
      cell.success_fraction /= static_cast<double>(cell.runs);
    }
  }
  return rows;
}

Exp3Result run_exp3(const ExperimentConfig& cfg) {
  if (cfg.id != ExperimentId::exp3) throw ConfigError("run_exp3 needs an exp3 configuration");
  Exp3Result out;
  out.records = run_experiment(cfg);
  out.table = aggregate_init_grid(out.records);
  return out;
}

const std::vector<std::string>& result_header() {
  static const std::vector<std::string> header = {
      "experiment_id", "variant",    "operation",    "train_dist",   "extrap_dist",
      "init_spec",     "seed",       "interp_mse",   "extrap_mse",   "success",
      "reinit_count",  "epochs_run", "extrap_parts", "status",       "diagnostic"};
  return header;
}

void write_results(const std::vector<ResultRecord>& records, std::ostream& out) {
  const auto& header = result_header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const ResultRecord& r : records) {
    std::string parts;
    for (std::size_t i = 0; i < r.extrap_parts.size(); ++i) {
      parts += (i ? ";" : "") + format_double(r.extrap_parts[i]);
    }
    out << csv_field(r.experiment_id) << ',' << to_string(r.variant) << ','
        << to_string(r.operation) << ',' << csv_field(r.train_dist) << ','
        << csv_field(r.extrap_dist) << ',' << csv_field(r.init_spec.label()) << ',' << r.seed
        << ',' << format_double(r.interp_mse) << ',' << format_double(r.extrap_mse) << ','
        << (r.success ? 1 : 0) << ',' << r.reinit_count << ',' << r.epochs_run << ','
        << csv_field(parts) << ',' << r.status << ',' << csv_field(r.diagnostic) << '\n';
  }
}

void write_results(const std::vector<ResultRecord>& records, const std::string& path) {
  if (records.empty()) throw ConfigError("no result records to write");
  std::ostringstream table;
  write_results(records, table);
  std::ostringstream timing;
  timing << "experiment_id,variant,operation,train_dist,extrap_dist,init_spec,seed,"
            "wall_time_seconds\n";
  for (const ResultRecord& r : records) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", r.wall_time_seconds);
    timing << csv_field(r.experiment_id) << ',' << to_string(r.variant) << ','
           << to_string(r.operation) << ',' << csv_field(r.train_dist) << ','
           << csv_field(r.extrap_dist) << ',' << csv_field(r.init_spec.label()) << ',' << r.seed
           << ',' << buf << '\n';
  }
  for (const auto& [file, text] : {std::pair{path, table.str()},
                                   std::pair{path + ".timing.csv", timing.str()}}) {
    std::ofstream f(file, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + file + "' for writing");
    f << text;
    if (!f) throw std::runtime_error("write to '" + file + "' failed");
  }
}

std::vector<ResultRecord> read_results(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty results table");
  const auto header = split_csv_line(line);
  if (header != result_header()) throw ConfigError("unexpected results header");
  std::vector<ResultRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw ConfigError("results row has wrong field count");
    ResultRecord r;
    r.experiment_id = f[0];
    r.variant = parse_variant(f[1]);
    r.operation = parse_operation(f[2]);
    r.train_dist = f[3];
    r.extrap_dist = f[4];
    r.init_spec = parse_init_label(f[5]);
    r.seed = std::stoull(f[6]);
    r.interp_mse = parse_double(f[7]);
    r.extrap_mse = parse_double(f[8]);
    r.success = f[9] == "1";
    r.reinit_count = std::stoi(f[10]);
    r.epochs_run = std::stoi(f[11]);
    std::stringstream parts(f[12]);
    std::string part;
    while (std::getline(parts, part, ';')) {
      if (!part.empty()) r.extrap_parts.push_back(parse_double(part));
    }
    r.status = f[13];
    r.diagnostic = f[14];
    out.push_back(std::move(r));
  }
  return out;
}

void write_metadata(const ExperimentConfig& cfg, const std::string& path) {
  using nlohmann::json;
  json grid = json::array();
  for (const DistributionPair& p : cfg.grid) {
    grid.push_back({{"train", p.train.label()}, {"extrapolation", p.extrap_label()}});
  }
  json inits = json::array();
  for (const InitSpec& s : cfg.init_grid) inits.push_back(s.label());
  json variants = json::array();
  for (CellVariant v : cfg.variants) variants.push_back(to_string(v));
  json ops = json::array();
  for (Operation o : cfg.operations) ops.push_back(to_string(o));
  const TrainConfig& t = cfg.train;

  json meta = {
      {"library_version", kLibraryVersion},
      {"experiment_id", to_string(cfg.id)},
      {"variants", variants},
      {"operations", ops},
      {"distribution_grid", grid},
      {"distribution_grid_note",
       "exp1/exp2 default ranges approximate the published figure axes; exponential "
       "extrapolation uses half the training rate"},
      {"init_grid", inits},
      {"base_seed", cfg.base_seed},
      {"seed_count", cfg.seed_count},
      {"sample_count", cfg.sample_count()},
      {"hidden_width", cfg.hidden_width},
      {"workers", cfg.workers},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"steps_per_epoch", t.steps_per_epoch},
        {"adam", {{"beta1", t.beta1}, {"beta2", t.beta2}, {"eps", t.adam_eps}}},
        {"grad_clip_norm", t.grad_clip_norm},
        {"gradient_clipping_applies_to", "all variants"},
        {"reinit_check_every_epochs", t.reinit_check_every_epochs},
        {"reinit_stale_steps", t.reinit_stale_steps},
        {"reinit_loss_threshold", t.reinit_loss_threshold},
        {"max_reinits", t.max_reinits},
        {"init", init_json(t.init)},
        {"regularize", t.regularize},
        {"improvements_for_baseline", t.improvements_for_baseline}}},
      {"constants",
       {{"epsilon", t.hyper.epsilon},
        {"omega", t.hyper.omega},
        {"reg_t", t.reg.t},
        {"reg_scale", t.reg.scale},
        {"reg_activation_epoch", t.reg.activation_epoch},
        {"reg_activation_loss", t.reg.activation_loss},
        {"reg_activation_loss_source", "most recent mini-batch data MSE, penalty excluded"},
        {"success_threshold", kSuccessThreshold},
        {"init_grid_threshold", kInitGridThreshold},
        {"div_min_divisor", kMinDivisor},
        {"div_max_resample_attempts", kMaxResampleAttempts},
        {"function_task_group_size", {20, 40}},
        {"reinit_rule",
         "at multiples of reinit_check_every_epochs: best loss of the last reinit_stale_steps "
         "steps not below the best loss before them, and mean of the last 100 step losses above "
         "reinit_loss_threshold; Adam moments reset"},
        {"extrapolation_reporting",
         "extrap_mse covers all extrapolation samples; extrap_parts lists each range"}}},
  };
  const std::string file = path + ".meta.json";
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + file + "' for writing");
  f << meta.dump(2) << '\n';
}

void write_init_grid_table(const std::vector<InitGridRow>& rows,
                           const std::vector<Operation>& operations, std::ostream& out) {
  out << "gate_mean,m_hat_mean,w_hat_mean";
  for (Operation op : operations) {
    out << ',' << to_string(op) << "_max_mse," << to_string(op) << "_stable," << to_string(op)
        << "_success_pct";
  }
  out << '\n';
  for (const InitGridRow& row : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%g,%g,%g", row.gate_mean, row.m_hat_mean, row.w_hat_mean);
    out << buf;
    for (Operation op : operations) {
      const auto it = row.cells.find(op);
      if (it == row.cells.end()) {
        out << ",,,";
        continue;
      }
      std::snprintf(buf, sizeof buf, "%.1f", 100.0 * it->second.success_fraction);
      out << ',' << format_double(it->second.max_extrap_mse) << ','
          << (it->second.stable ? 1 : 0) << ',' << buf;
    }
    out << '\n';
  }
}

std::vector<CellSummary> summarize(const std::vector<ResultRecord>& records) {
  std::vector<CellSummary> out;
  std::map<std::string, std::vector<double>> values;
  for (const ResultRecord& r : records) {
    const std::string key = std::string(to_string(r.variant)) + " " +
                            std::string(to_string(r.operation)) + " " + r.train_dist + "->" +
                            r.extrap_dist + " " + r.init_spec.label();
    if (!values.contains(key)) out.push_back({key});
    values[key].push_back(std::isnan(r.extrap_mse) ? HUGE_VAL : r.extrap_mse);
    for (CellSummary& s : out) {
      if (s.key == key) {
        ++s.runs;
        s.successes += r.success ? 1 : 0;
      }
    }
  }
  for (CellSummary& s : out) {
    std::vector<double> v = values[s.key];
    std::sort(v.begin(), v.end());
    double total = 0.0;
    for (double x : v) total += x;
    s.mean_extrap_mse = total / static_cast<double>(v.size());
    s.max_extrap_mse = v.back();
    const std::size_t mid = v.size() / 2;
    s.median_extrap_mse = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  }
  return out;
}

std::vector<GradCheckRow> run_gradcheck(const std::vector<CellVariant>& variants,
                                        std::size_t instances, std::uint64_t base_seed) {
  if (variants.empty() || instances == 0) throw ConfigError("nothing to gradient-check");
  std::vector<GradCheckRow> rows;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::size_t i = 0; i < instances; ++i) {
      GradCheckRow row;
      row.variant = variants[v];
      row.instance = i;
      row.dims.in = 1 + i % 4;
      row.dims.out = 1 + (i / 4) % 3;
      row.dims.batch = 1 + (i * 5) % 8;
      row.dims.large_inputs = i % 4 == 3;
      // large inputs feed one layer only: a second layer sees outputs near
      // e^omega and finite differences at step 1e-5 drown in rounding
      row.dims.layers = row.dims.large_inputs ? 1 : 1 + (i / 2) % 2;
      row.report = gradient_check(row.variant, row.dims, derive_seed(base_seed, v * 100003 + i));
      rows.push_back(row);
    }
  }
  return rows;
}

void write_gradcheck(const std::vector<GradCheckRow>& rows, std::ostream& out) {
  out << "variant,instance,in,out,batch,layers,large_inputs,max_rel_error,checked,skipped\n";
  for (const GradCheckRow& r : rows) {
    out << to_string(r.variant) << ',' << r.instance << ',' << r.dims.in << ',' << r.dims.out
        << ',' << r.dims.batch << ',' << r.dims.layers << ',' << (r.dims.large_inputs ? 1 : 0)
        << ',' << format_double(r.report.max_rel_error) << ',' << r.report.checked << ','
        << r.report.skipped << '\n';
  }
}

}  // namespace inalu
