#include "inalu/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "inalu/errors.hpp"

namespace inalu {

namespace {

constexpr std::size_t kSmoothingWindow = 100;

std::vector<Tensor*> parameter_list(Model& model) {
  std::vector<Tensor*> out;
  for (CellParams& layer : model) {
    for (auto& [name, t] : layer.named()) out.push_back(t);
  }
  return out;
}

std::vector<ad::Var> bound_list(std::span<const BoundCell> layers) {
  std::vector<ad::Var> out;
  for (const BoundCell& layer : layers) {
    for (ad::Var v : layer.distinct()) out.push_back(v);
  }
  return out;
}

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> rows) {
  const std::size_t cols = src.cols();
  Tensor out(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* from = src.values().data() + rows[i] * cols;
    std::copy(from, from + cols, out.values().begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  return out;
}

bool improvements_apply(CellVariant v, const TrainConfig& cfg) {
  return is_inalu(v) || cfg.improvements_for_baseline;
}

}  // namespace

void InitSpec::validate() const {
  for (const NormalInit* g : {&gate, &m_hat, &w_hat}) {
    if (!(g->stddev > 0.0)) throw ConfigError("initialization stddev must be positive");
    if (!std::isfinite(g->mean) || !std::isfinite(g->stddev)) {
      throw ConfigError("initialization parameters must be finite");
    }
  }
}

std::string InitSpec::label() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "(%g,%g,%g)/(%g,%g,%g)", gate.mean, m_hat.mean, w_hat.mean,
                gate.stddev, m_hat.stddev, w_hat.stddev);
  return buf;
}

void Architecture::validate() const {
  if (widths.size() < 2) throw ConfigError("architecture needs input and output widths");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("layer widths must be positive");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (reinit_check_every_epochs < 1) throw ConfigError("reinit_check_every_epochs must be >= 1");
  if (reinit_stale_steps == 0) throw ConfigError("reinit_stale_steps must be positive");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be positive");
  if (max_reinits < 0 || max_reinits > 9) throw ConfigError("max_reinits must be in [0, 9]");
  if (eval_chunk_rows == 0) throw ConfigError("eval_chunk_rows must be positive");
  init.validate();
  hyper.validate();
  reg.validate();
}

CellParams init_layer(CellVariant variant, std::size_t in, std::size_t out,
                      const InitSpec& init, std::mt19937_64& rng) {
  init.validate();
  CellParams p = CellParams::zeros(variant, in, out);
  auto fill = [&rng](Tensor& t, const NormalInit& spec) {
    std::normal_distribution<double> normal(spec.mean, spec.stddev);
    for (double& v : t.values()) v = normal(rng);
  };
  fill(p.gate, init.gate);
  fill(p.m_hat_a, init.m_hat);
  fill(p.w_hat_a, init.w_hat);
  if (has_independent_weights(variant)) {
    fill(p.m_hat_m, init.m_hat);
    fill(p.w_hat_m, init.w_hat);
  }
  return p;
}

Model init_params(const Architecture& arch, const InitSpec& init, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  Model model;
  for (std::size_t i = 0; i + 1 < arch.widths.size(); ++i) {
    model.push_back(init_layer(arch.variant, arch.widths[i], arch.widths[i + 1], init, rng));
  }
  return model;
}

OptimizerState OptimizerState::for_params(std::span<Tensor* const> params) {
  OptimizerState s;
  for (const Tensor* p : params) {
    s.first.emplace_back(p->rows(), p->cols());
    s.second.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               OptimizerState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.first.size()) {
    throw ConfigError("adam_step: parameter, gradient and state counts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(cfg.beta1, t);
  const double correct2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    Tensor& m = state.first[k];
    Tensor& v = state.second[k];
    if (!p.same_shape(g) || !p.same_shape(m)) throw ConfigError("adam_step: shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

double global_norm(std::span<const Tensor> grads) noexcept {
  double acc = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.values()) acc += v * v;
  }
  return std::sqrt(acc);
}

double clip_gradients(std::span<Tensor> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.values()) v *= factor;
    }
  }
  return norm;
}

bool should_reinitialize(int epoch, std::span<const double> history, const TrainConfig& cfg) {
  if (epoch <= 0 || epoch % cfg.reinit_check_every_epochs != 0 || history.empty()) return false;
  const std::size_t n = history.size();
  const std::size_t window = std::min(cfg.reinit_stale_steps, n);
  const auto recent_begin = history.begin() + static_cast<std::ptrdiff_t>(n - window);
  double before_best = 0.0;
  double recent_best = 0.0;
  if (n > window) {
    before_best = *std::min_element(history.begin(), recent_begin);
    recent_best = *std::min_element(recent_begin, history.end());
  } else {
    before_best = history.front();
    recent_best = n > 1 ? *std::min_element(history.begin() + 1, history.end()) : before_best;
  }
  if (recent_best < before_best) return false;
  const std::size_t smooth = std::min(kSmoothingWindow, n);
  const double recent_mean =
      std::accumulate(history.end() - static_cast<std::ptrdiff_t>(smooth), history.end(), 0.0) /
      static_cast<double>(smooth);
  return recent_mean > cfg.reinit_loss_threshold;
}

std::string format_progress(const ProgressLine& line, const std::string& label) {
  char buf[160];
  std::snprintf(buf, sizeof buf, " epoch=%d step=%zu loss=%.6e reg=%d reinit=%d", line.epoch,
                line.step, line.loss, line.reg_active ? 1 : 0, line.reinit_count);
  return "progress " + label + buf;
}

double evaluate(const Model& model, const CellHyper& hyper, const Dataset& data,
                std::size_t chunk_rows) {
  return evaluate_union(model, hyper, std::span<const Dataset>(&data, 1), chunk_rows);
}

double evaluate_union(const Model& model, const CellHyper& hyper, std::span<const Dataset> parts,
                      std::size_t chunk_rows) {
  if (chunk_rows == 0) throw ConfigError("chunk_rows must be positive");
  double acc = 0.0;
  std::size_t count = 0;
  for (const Dataset& data : parts) {
    if (data.x.cols() != model.front().in_dim() || data.y.cols() != model.back().out_dim()) {
      throw ConfigError("dataset shape does not match model");
    }
    const std::size_t n = data.x.rows();
    for (std::size_t begin = 0; begin < n; begin += chunk_rows) {
      const std::size_t end = std::min(n, begin + chunk_rows);
      const Tensor pred = predict(model, hyper, data.x.row_slice(begin, end));
      for (std::size_t r = begin; r < end; ++r) {
        const double d = pred(r - begin, 0) - data.y(r, 0);
        acc += d * d;
      }
    }
    count += n;
  }
  if (count == 0) throw ConfigError("evaluation on empty dataset");
  return acc / static_cast<double>(count);
}

double small_weight_fraction(const Model& model, double below) {
  std::size_t small = 0, total = 0;
  for (const CellParams& layer : model) {
    for (const auto& [name, t] : layer.named()) {
      for (double v : t->values()) {
        small += std::fabs(v) < below ? 1 : 0;
        ++total;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(small) / static_cast<double>(total);
}

TrainReport train(const Architecture& arch, const TaskSpec& task, const TrainConfig& cfg,
                  std::uint64_t seed, const TrainOptions& options) {
  arch.validate();
  task.validate();
  cfg.validate();
  if (arch.widths.front() != task.input_dim || arch.widths.back() != 1) {
    throw ConfigError("architecture does not match task dimensions");
  }

  TrainReport report;
  report.seed = seed;

  const Dataset train_set = build_dataset(task, Split::interpolation, derive_seed(seed, 10));
  const Dataset interp_set = build_dataset(task, Split::interpolation, derive_seed(seed, 11));
  std::vector<Dataset> extrap_sets;
  extrap_sets.push_back(build_dataset(task, Split::extrapolation, derive_seed(seed, 12)));
  if (task.extrap_dist_alt) {
    extrap_sets.push_back(
        build_dataset(task, *task.extrap_dist_alt, Split::extrapolation, derive_seed(seed, 13)));
  }

  std::mt19937_64 init_rng(derive_seed(seed, 20));
  std::mt19937_64 shuffle_rng(derive_seed(seed, 30));
  auto fresh_model = [&] {
    Model m;
    for (std::size_t i = 0; i + 1 < arch.widths.size(); ++i) {
      m.push_back(init_layer(arch.variant, arch.widths[i], arch.widths[i + 1], cfg.init, init_rng));
    }
    return m;
  };

  Model model = options.initial_params ? *options.initial_params : fresh_model();
  validate_model(model);
  for (const CellParams& layer : model) {
    if (layer.variant != arch.variant) throw ConfigError("initial parameters use another variant");
  }

  std::vector<Tensor*> params = parameter_list(model);
  OptimizerState adam = OptimizerState::for_params(params);
  const bool improvements = improvements_apply(arch.variant, cfg);
  const bool use_reg = improvements && cfg.regularize;
  const bool inalu_model = is_inalu(arch.variant);

  const std::size_t n = train_set.x.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  std::size_t global_step = 0;

  try {
    report.initial_train_loss = evaluate(model, cfg.hyper, train_set, cfg.eval_chunk_rows);

    const std::size_t steps_per_epoch =
        cfg.steps_per_epoch ? cfg.steps_per_epoch : (n + cfg.batch_size - 1) / cfg.batch_size;
    std::size_t cursor = n;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      bool reg_on = false;
      double epoch_loss = 0.0;
      std::size_t epoch_steps = 0;

      for (std::size_t step = 0; step < steps_per_epoch; ++step) {
        if (cursor >= n) {
          std::shuffle(order.begin(), order.end(), shuffle_rng);
          cursor = 0;
        }
        const std::size_t end = std::min(n, cursor + cfg.batch_size);
        const std::span<const std::size_t> rows(order.data() + cursor, end - cursor);
        cursor = end;

        ad::Tape tape;
        const auto layers = bind_params(tape, model, /*trainable=*/true);
        ad::Var x = tape.constant(gather_rows(train_set.x, rows));
        ad::Var y = tape.constant(gather_rows(train_set.y, rows));
        ad::Var loss = ad::mse_loss(stack(layers, cfg.hyper, x), y);
        const double data_loss = loss.value().item();

        reg_on = use_reg && reg_active(epoch, data_loss, cfg.reg);
        if (reg_on && !report.reg_activation_epoch) {
          report.reg_activation_epoch = epoch;
          report.small_weight_fraction_at_reg_activation = small_weight_fraction(model);
        }
        ad::Var objective = reg_on ? ad::add(loss, total_reg(layers, cfg.reg)) : loss;
        tape.backward(objective);

        std::vector<Tensor> grads;
        for (ad::Var v : bound_list(layers)) grads.push_back(v.grad());
        const double norm = global_norm(grads);
        ++global_step;

        if (!std::isfinite(data_loss) || !std::isfinite(norm)) {
          if (inalu_model) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "non-finite %s at epoch %d step %zu (loss=%g, grad norm=%g)",
                          std::isfinite(data_loss) ? "gradient" : "loss", epoch, global_step,
                          data_loss, norm);
            throw InvariantViolation(buf);
          }
          // original NALU can overflow; skip the update and keep going
          history.push_back(std::numeric_limits<double>::infinity());
          epoch_loss = std::numeric_limits<double>::infinity();
          ++epoch_steps;
          continue;
        }

        clip_gradients(grads, cfg.grad_clip_norm);
        adam_step(params, grads, adam, cfg);
        history.push_back(data_loss);
        epoch_loss += data_loss;
        ++epoch_steps;
      }

      report.epochs_run = epoch;
      if (options.progress) {
        options.progress(ProgressLine{epoch, global_step,
                                      epoch_steps ? epoch_loss / static_cast<double>(epoch_steps)
                                                  : 0.0,
                                      reg_on, report.reinit_count});
      }

      if (improvements && epoch < cfg.epochs && report.reinit_count < cfg.max_reinits &&
          should_reinitialize(epoch, history, cfg)) {
        model = fresh_model();
        params = parameter_list(model);
        adam = OptimizerState::for_params(params);
        history.clear();
        report.reg_activation_epoch.reset();
        report.small_weight_fraction_at_reg_activation.reset();
        ++report.reinit_count;
      }
    }

    report.final_train_loss = evaluate(model, cfg.hyper, train_set, cfg.eval_chunk_rows);
    report.interp_mse = evaluate(model, cfg.hyper, interp_set, cfg.eval_chunk_rows);
    for (const Dataset& part : extrap_sets) {
      report.extrap_parts.push_back(evaluate(model, cfg.hyper, part, cfg.eval_chunk_rows));
    }
    report.extrap_mse = evaluate_union(model, cfg.hyper, extrap_sets, cfg.eval_chunk_rows);
  } catch (const InvariantViolation& e) {
    report.failed = true;
    report.diagnostic = e.what();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.final_train_loss = report.interp_mse = report.extrap_mse = nan;
    report.extrap_parts.assign(extrap_sets.size(), nan);
  }

  report.final_small_weight_fraction = small_weight_fraction(model);
  report.params = std::move(model);
  return report;
}

GradCheckReport gradient_check(const Model& model, const Tensor& x, const Tensor& y,
                               const CellHyper& hyper, const GradCheckOptions& options) {
  validate_model(model);
  struct Eval {
    double loss;
    std::vector<std::int8_t> signature;
  };
  auto run = [&](const Model& m, std::vector<Tensor>* grads) {
    ad::Tape tape;
    const auto layers = bind_params(tape, m, /*trainable=*/true);
    ad::Var pred = stack(layers, hyper, tape.constant(x));
    ad::Var loss = ad::mse_loss(pred, tape.constant(y));
    if (options.reg) loss = ad::add(loss, total_reg(layers, *options.reg));
    if (grads) {
      tape.backward(loss);
      for (ad::Var v : bound_list(layers)) grads->push_back(v.grad());
    }
    return Eval{loss.value().item(), tape.branch_signature()};
  };

  std::vector<Tensor> analytic;
  const Eval base = run(model, &analytic);
  const double floor = 1e-6 * std::max(1.0, std::fabs(base.loss));

  GradCheckReport report;
  Model probe = model;
  std::vector<Tensor*> params = parameter_list(probe);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double original = p[i];
      p[i] = original + options.kink_radius;
      const bool same_up = run(probe, nullptr).signature == base.signature;
      p[i] = original - options.kink_radius;
      const bool same_down = run(probe, nullptr).signature == base.signature;
      if (!same_up || !same_down) {
        p[i] = original;
        ++report.skipped;
        continue;
      }
      p[i] = original + options.step;
      const double up = run(probe, nullptr).loss;
      p[i] = original - options.step;
      const double down = run(probe, nullptr).loss;
      p[i] = original;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
      const double rel = std::fabs(a - numeric) / denom;
      report.max_rel_error = std::max(report.max_rel_error, std::isnan(rel) ? HUGE_VAL : rel);
      ++report.checked;
    }
  }
  return report;
}

GradCheckReport gradient_check(CellVariant variant, const GradCheckDims& dims, std::uint64_t seed,
                               const GradCheckOptions& options) {
  if (dims.in == 0 || dims.out == 0 || dims.batch == 0 || dims.layers == 0) {
    throw ConfigError("gradient check dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Model model;
  std::size_t width = dims.in;
  for (std::size_t l = 0; l < dims.layers; ++l) {
    CellParams p = CellParams::zeros(variant, width, dims.out);
    for (auto& [name, t] : p.named()) {
      for (double& v : t->values()) v = normal(rng);
    }
    model.push_back(std::move(p));
    width = dims.out;
  }
  const double lo = dims.large_inputs ? 1e3 : 0.2;
  const double hi = dims.large_inputs ? 1e6 : 2.0;
  std::uniform_real_distribution<double> log_mag(std::log(lo), std::log(hi));
  std::bernoulli_distribution negative(0.5);
  Tensor x(dims.batch, dims.in);
  for (double& v : x.values()) v = (negative(rng) ? -1.0 : 1.0) * std::exp(log_mag(rng));
  Tensor y(dims.batch, dims.out);
  for (double& v : y.values()) v = normal(rng);
  return gradient_check(model, x, y, CellHyper{}, options);
}

}  // namespace inalu
