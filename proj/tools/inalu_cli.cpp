// Command line front end for the experiment harness.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "inalu/errors.hpp"
#include "inalu/harness.hpp"

namespace {

using namespace inalu;

struct RunArgs {
  std::size_t seeds = 0;
  std::size_t samples = 0;
  int epochs = 0;
  int epoch_steps = -1;
  std::vector<std::string> variants;
  std::vector<std::string> operations;
  std::string out;
  int workers = 1;
  std::string reg;
  std::uint64_t base_seed = 0;
  std::string grid;
  std::vector<double> means;
  std::vector<double> sigmas;
  std::size_t hidden = 0;
  bool progress = false;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--seeds", a.seeds, "Seeds per cell");
  cmd->add_option("--samples", a.samples, "Samples per split (default 64000)");
  cmd->add_option("--epochs", a.epochs, "Training epochs");
  cmd->add_option("--epoch-steps", a.epoch_steps,
                  "Optimizer steps per epoch, 0 = one pass over the training set");
  cmd->add_option("--variants", a.variants, "Model variants")->delimiter(',');
  cmd->add_option("--operations", a.operations, "ADD,SUB,MUL,DIV")->delimiter(',');
  cmd->add_option("--out", a.out, "Results CSV path")->required();
  cmd->add_option("--workers", a.workers, "Parallel runs")->check(CLI::PositiveNumber);
  cmd->add_option("--reg", a.reg, "Regularizer on|off")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--base-seed", a.base_seed, "First seed");
  cmd->add_option("--grid", a.grid, "Distribution grid file")->check(CLI::ExistingFile);
  cmd->add_option("--hidden", a.hidden, "Hidden width for the function task");
  cmd->add_flag("--progress", a.progress, "Print per-epoch progress lines");
}

ExperimentConfig build_config(ExperimentId id, const RunArgs& a) {
  ExperimentConfig cfg = ExperimentConfig::defaults(id);
  if (a.seeds) cfg.seed_count = a.seeds;
  if (a.samples) cfg.sample_count_override = a.samples;
  if (a.epochs) cfg.train.epochs = a.epochs;
  if (a.epoch_steps >= 0) cfg.train.steps_per_epoch = static_cast<std::size_t>(a.epoch_steps);
  if (!a.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : a.variants) cfg.variants.push_back(parse_variant(v));
  }
  if (!a.operations.empty()) {
    cfg.operations.clear();
    for (const auto& o : a.operations) cfg.operations.push_back(parse_operation(o));
  }
  if (!a.reg.empty()) cfg.train.regularize = a.reg == "on";
  cfg.base_seed = a.base_seed;
  if (!a.grid.empty()) {
    std::ifstream in(a.grid);
    cfg.grid = read_grid(in);
  }
  if (!a.means.empty() || !a.sigmas.empty()) {
    cfg.init_grid = init_search_space(a.means.empty() ? std::vector<double>{-1, 0, 1} : a.means,
                                      a.sigmas.empty() ? std::vector<double>{0.1, 0.5} : a.sigmas);
  }
  if (a.hidden) cfg.hidden_width = a.hidden;
  cfg.workers = a.workers;
  cfg.output_path = a.out;
  cfg.progress = a.progress;
  return cfg;
}

int report(const std::vector<ResultRecord>& records) {
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.status == "ok" ? 0 : 1;
  for (const CellSummary& s : summarize(records)) {
    std::printf("%-70s %zu/%zu  median %.3e  max %.3e\n", s.key.c_str(), s.successes, s.runs,
                s.median_extrap_mse, s.max_extrap_mse);
  }
  std::printf("%zu runs, %zu failed\n", records.size(), failed);
  return failed == 0 ? 0 : 1;
}

int run(ExperimentId id, const RunArgs& a) {
  const ExperimentConfig cfg = build_config(id, a);
  cfg.validate();
  write_metadata(cfg, cfg.output_path);
  if (id == ExperimentId::exp3) {
    const Exp3Result res = run_exp3(cfg);
    write_results(res.records, cfg.output_path);
    std::ofstream table(cfg.output_path + ".grid.csv");
    write_init_grid_table(res.table, cfg.operations, table);
    write_init_grid_table(res.table, cfg.operations, std::cout);
    return report(res.records);
  }
  const auto records = run_experiment(cfg);
  write_results(records, cfg.output_path);
  return report(records);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NALU / iNALU arithmetic extrapolation experiments"};
  app.set_version_flag("--version", inalu::kLibraryVersion);
  app.require_subcommand(1);

  RunArgs exp_args[4];
  const char* names[4] = {"exp1", "exp2", "exp3", "exp4"};
  const char* blurbs[4] = {"Minimal arithmetic task (2 inputs)",
                           "Simple arithmetic task (10 inputs, 1 relevant pair)",
                           "Initialization grid on the function task",
                           "Function task (100 inputs, 2 hidden units)"};
  CLI::App* exp_cmds[4];
  for (int i = 0; i < 4; ++i) {
    exp_cmds[i] = app.add_subcommand(names[i], blurbs[i]);
    add_run_options(exp_cmds[i], exp_args[i]);
  }
  exp_cmds[2]->add_option("--means", exp_args[2].means, "Group means to sweep")->delimiter(',');
  exp_cmds[2]->add_option("--sigmas", exp_args[2].sigmas, "Group stddevs to sweep")->delimiter(',');

  std::size_t gc_instances = 100;
  std::uint64_t gc_seed = 0;
  std::vector<std::string> gc_variants;
  std::string gc_out;
  auto* gc = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  gc->add_option("--instances", gc_instances, "Random instances per variant");
  gc->add_option("--base-seed", gc_seed, "Seed");
  gc->add_option("--variants", gc_variants, "Model variants")->delimiter(',');
  gc->add_option("--out", gc_out, "CSV path (default stdout)");

  std::string ds_task = "minimal", ds_op = "ADD", ds_train = "U(-3,3)", ds_extrap = "U(-5,5)";
  std::string ds_split = "interp", ds_out;
  std::size_t ds_samples = 64000;
  std::uint64_t ds_seed = 0;
  auto* ds = app.add_subcommand("dataset", "Export a generated dataset as CSV");
  ds->add_option("--task", ds_task)->check(CLI::IsMember({"minimal", "simple", "function"}));
  ds->add_option("--op", ds_op);
  ds->add_option("--train", ds_train, "Training distribution, e.g. U(-3,3)");
  ds->add_option("--extrap", ds_extrap, "Extrapolation distribution");
  ds->add_option("--split", ds_split)->check(CLI::IsMember({"interp", "extrap"}));
  ds->add_option("--samples", ds_samples);
  ds->add_option("--seed", ds_seed);
  ds->add_option("--out", ds_out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    for (int i = 0; i < 4; ++i) {
      if (*exp_cmds[i]) return run(inalu::parse_experiment(names[i]), exp_args[i]);
    }
    if (*gc) {
      std::vector<inalu::CellVariant> variants(std::begin(inalu::kAllVariants),
                                               std::end(inalu::kAllVariants));
      if (!gc_variants.empty()) {
        variants.clear();
        for (const auto& v : gc_variants) variants.push_back(inalu::parse_variant(v));
      }
      const auto rows = inalu::run_gradcheck(variants, gc_instances, gc_seed);
      double worst = 0.0;
      for (const auto& r : rows) worst = std::max(worst, r.report.max_rel_error);
      if (gc_out.empty()) {
        inalu::write_gradcheck(rows, std::cout);
      } else {
        std::ofstream f(gc_out);
        inalu::write_gradcheck(rows, f);
      }
      std::fprintf(stderr, "%zu instances, worst relative error %.3e\n", rows.size(), worst);
      return 0;
    }
    if (*ds) {
      const auto kind = ds_task == "minimal"  ? inalu::TaskKind::minimal
                        : ds_task == "simple" ? inalu::TaskKind::simple
                                              : inalu::TaskKind::function;
      const auto task = inalu::TaskSpec::make(kind, inalu::parse_operation(ds_op),
                                              inalu::DistributionSpec::parse(ds_train),
                                              inalu::DistributionSpec::parse(ds_extrap),
                                              inalu::derive_seed(ds_seed, 1), ds_samples);
      const auto split =
          ds_split == "interp" ? inalu::Split::interpolation : inalu::Split::extrapolation;
      const auto data = inalu::build_dataset(task, split, ds_seed);
      if (ds_out.empty()) {
        inalu::write_dataset_csv(std::cout, data);
      } else {
        std::ofstream f(ds_out);
        inalu::write_dataset_csv(f, data);
      }
      return 0;
    }
  } catch (const inalu::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
