#include "inalu/cells.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "inalu/errors.hpp"

namespace inalu {

using ad::Var;

std::string_view to_string(CellVariant v) noexcept {
  switch (v) {
    case CellVariant::nalu_vector_gate:
      return "nalu_vector_gate";
    case CellVariant::nalu_matrix_gate:
      return "nalu_matrix_gate";
    case CellVariant::inalu_shared_weights:
      return "inalu_shared_weights";
    case CellVariant::inalu_independent_weights:
      return "inalu_independent_weights";
  }
  return "unknown";
}

CellVariant parse_variant(std::string_view name) {
  for (CellVariant v : kAllVariants) {
    if (name == to_string(v)) return v;
  }
  // short aliases used on the command line
  if (name == "nalu_v" || name == "nalu-v") return CellVariant::nalu_vector_gate;
  if (name == "nalu_m" || name == "nalu-m") return CellVariant::nalu_matrix_gate;
  if (name == "inalu_sw" || name == "inalu-sw") return CellVariant::inalu_shared_weights;
  if (name == "inalu_iw" || name == "inalu-iw") return CellVariant::inalu_independent_weights;
  throw ConfigError("unknown cell variant '" + std::string(name) + "'");
}

void CellHyper::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(omega > 0.0)) throw ConfigError("omega must be positive");
}

std::pair<std::size_t, std::size_t> gate_shape(CellVariant v, std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ConfigError("layer dimensions must be positive");
  switch (v) {
    case CellVariant::nalu_vector_gate:
      return {in, 1};
    case CellVariant::nalu_matrix_gate:
      return {in, out};
    case CellVariant::inalu_shared_weights:
    case CellVariant::inalu_independent_weights:
      return {1, out};
  }
  return {1, out};
}

CellParams CellParams::zeros(CellVariant variant, std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ConfigError("layer dimensions must be positive");
  CellParams p;
  p.variant = variant;
  p.w_hat_a = Tensor(in, out);
  p.m_hat_a = Tensor(in, out);
  if (has_independent_weights(variant)) {
    p.w_hat_m = Tensor(in, out);
    p.m_hat_m = Tensor(in, out);
  }
  const auto [gr, gc] = gate_shape(variant, in, out);
  p.gate = Tensor(gr, gc);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> CellParams::named() {
  if (has_independent_weights(variant)) {
    return {{"W_hat_a", &w_hat_a}, {"M_hat_a", &m_hat_a}, {"W_hat_m", &w_hat_m},
            {"M_hat_m", &m_hat_m}, {"G", &gate}};
  }
  return {{"W_hat", &w_hat_a}, {"M_hat", &m_hat_a}, {"G", &gate}};
}

std::vector<std::pair<std::string, const Tensor*>> CellParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<CellParams*>(this)->named()) out.emplace_back(name, t);
  return out;
}

void CellParams::validate() const {
  const std::size_t in = in_dim(), out = out_dim();
  if (in == 0 || out == 0) throw ConfigError("layer has empty weight matrix");
  auto expect = [](const Tensor& t, std::size_t r, std::size_t c, const char* what) {
    if (t.rows() != r || t.cols() != c) {
      throw ConfigError(std::string(what) + " has shape " + t.shape_string() + ", expected [" +
                        std::to_string(r) + "x" + std::to_string(c) + "]");
    }
  };
  expect(m_hat_a, in, out, "M_hat_a");
  if (has_independent_weights(variant)) {
    expect(w_hat_m, in, out, "W_hat_m");
    expect(m_hat_m, in, out, "M_hat_m");
  }
  const auto [gr, gc] = gate_shape(variant, in, out);
  expect(gate, gr, gc, "G");
}

bool CellParams::all_finite() const {
  for (const auto& [name, t] : named()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

void validate_model(const Model& model) {
  if (model.empty()) throw ConfigError("model has no layers");
  for (std::size_t i = 0; i < model.size(); ++i) {
    model[i].validate();
    if (i > 0 && model[i].in_dim() != model[i - 1].out_dim()) {
      throw ConfigError("layer " + std::to_string(i) + " expects " +
                        std::to_string(model[i].in_dim()) + " inputs but layer " +
                        std::to_string(i - 1) + " produces " +
                        std::to_string(model[i - 1].out_dim()));
    }
  }
}

std::vector<Var> BoundCell::distinct() const {
  if (has_independent_weights(variant)) return {w_hat_a, m_hat_a, w_hat_m, m_hat_m, gate};
  return {w_hat_a, m_hat_a, gate};
}

BoundCell bind_params(ad::Tape& tape, const CellParams& params, bool trainable) {
  params.validate();
  auto place = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  BoundCell c;
  c.variant = params.variant;
  c.w_hat_a = place(params.w_hat_a);
  c.m_hat_a = place(params.m_hat_a);
  if (has_independent_weights(params.variant)) {
    c.w_hat_m = place(params.w_hat_m);
    c.m_hat_m = place(params.m_hat_m);
  } else {
    c.w_hat_m = c.w_hat_a;
    c.m_hat_m = c.m_hat_a;
  }
  c.gate = place(params.gate);
  return c;
}

std::vector<BoundCell> bind_params(ad::Tape& tape, const Model& model, bool trainable) {
  validate_model(model);
  std::vector<BoundCell> out;
  out.reserve(model.size());
  for (const CellParams& p : model) out.push_back(bind_params(tape, p, trainable));
  return out;
}

Var combined_weight(Var w_hat, Var m_hat) {
  if (!w_hat.value().same_shape(m_hat.value())) {
    throw ConfigError("W_hat " + w_hat.value().shape_string() + " and M_hat " +
                      m_hat.value().shape_string() + " differ in shape");
  }
  return ad::mul(ad::tanh(w_hat), ad::sigmoid(m_hat));
}

Var summative_path(Var x, Var w) { return ad::matmul(x, w); }

Var multiplicative_path(Var x, Var w, const CellHyper& hyper, bool clipped) {
  if (!clipped) {
    Var log_x = ad::log(ad::add_scalar(ad::abs(x), hyper.epsilon));
    return ad::exp(ad::matmul(log_x, w));
  }
  Var log_x = ad::log(ad::max_const(ad::abs(x), hyper.epsilon));
  return ad::exp(ad::min_const(ad::matmul(log_x, w), hyper.omega));
}

SignCorrection sign_correction(Var x, Var w) {
  if (x.cols() != w.rows()) {
    throw ConfigError("sign correction: input has " + std::to_string(x.cols()) +
                      " columns but weight has " + std::to_string(w.rows()) + " rows");
  }
  ad::Tape& tape = *x.tape();
  Var sign_x = ad::sign(x);
  Var abs_w = ad::abs(w);
  SignCorrection out;
  std::vector<Var> columns;
  for (std::size_t j = 0; j < w.cols(); ++j) {
    Var weight_row = tape.transpose(tape.column(abs_w, j));  // 1 x in
    Var msm = ad::add(ad::mul(sign_x, weight_row), ad::rsub_scalar(1.0, weight_row));
    out.msm.push_back(msm);
    columns.push_back(ad::row_product(msm));
  }
  out.msv = columns.size() == 1 ? columns.front() : tape.concat_cols(columns);
  return out;
}

Var gate_input_dependent(Var x, Var gate) {
  if (x.cols() != gate.rows()) {
    throw ConfigError("gate weights " + gate.value().shape_string() + " do not match input " +
                      x.value().shape_string());
  }
  return ad::sigmoid(ad::matmul(x, gate));
}

Var gate_independent(Var gate) {
  if (gate.rows() != 1) throw ConfigError("independent gate must be a single row");
  return ad::sigmoid(gate);
}

ForwardTrace forward(const BoundCell& cell, const CellHyper& hyper, Var x) {
  ad::Tape& tape = *x.tape();
  ForwardTrace t;
  if (x.cols() != cell.w_hat_a.rows()) {
    throw ConfigError("input " + x.value().shape_string() + " does not match layer with " +
                      std::to_string(cell.w_hat_a.rows()) + " inputs");
  }
  const std::size_t out = cell.w_hat_a.cols();

  if (!is_inalu(cell.variant)) {
    Var w = combined_weight(cell.w_hat_a, cell.m_hat_a);
    t.a = summative_path(x, w);
    t.m = multiplicative_path(x, w, hyper, /*clipped=*/false);
    Var g = gate_input_dependent(x, cell.gate);
    if (g.cols() != out) {
      // vector gate: one scalar per sample, spread over the output columns
      g = tape.matmul(g, tape.constant(Tensor(1, out, 1.0)));
    }
    t.g = g;
    t.y = ad::add(ad::mul(g, t.a), ad::mul(ad::rsub_scalar(1.0, g), t.m));
    return t;
  }

  Var w_a = combined_weight(cell.w_hat_a, cell.m_hat_a);
  Var w_m = has_independent_weights(cell.variant) ? combined_weight(cell.w_hat_m, cell.m_hat_m)
                                                  : w_a;
  t.a = summative_path(x, w_a);
  t.m = multiplicative_path(x, w_m, hyper, /*clipped=*/true);
  SignCorrection sc = sign_correction(x, w_m);
  t.msm = std::move(sc.msm);
  t.msv = sc.msv;
  t.g = gate_independent(cell.gate);
  t.y = ad::add(ad::mul(t.g, t.a), ad::mul(ad::rsub_scalar(1.0, t.g), ad::mul(t.m, t.msv)));
  if (!t.y.value().all_finite()) {
    throw InvariantViolation(std::string(to_string(cell.variant)) +
                             " produced a non-finite output");
  }
  return t;
}

Var stack(std::span<const BoundCell> layers, const CellHyper& hyper, Var x,
          std::vector<ForwardTrace>* traces) {
  if (layers.empty()) throw ConfigError("stack of zero layers");
  Var h = x;
  for (const BoundCell& layer : layers) {
    ForwardTrace t = forward(layer, hyper, h);
    h = t.y;
    if (traces) traces->push_back(std::move(t));
  }
  return h;
}

Tensor predict(const Model& model, const CellHyper& hyper, const Tensor& x) {
  ad::Tape tape;
  auto layers = bind_params(tape, model, /*trainable=*/false);
  return stack(layers, hyper, tape.constant(x)).value();
}

void write_params(std::ostream& out, const Model& model) {
  validate_model(model);
  out << "inalu-params 1\n";
  out << "layers " << model.size() << "\n";
  char buf[40];
  for (std::size_t i = 0; i < model.size(); ++i) {
    const CellParams& p = model[i];
    out << "layer " << i << ' ' << to_string(p.variant) << ' ' << p.in_dim() << ' '
        << p.out_dim() << "\n";
    for (const auto& [name, t] : p.named()) {
      out << "matrix " << i << '.' << name << ' ' << t->rows() << ' ' << t->cols() << "\n";
      for (std::size_t r = 0; r < t->rows(); ++r) {
        for (std::size_t c = 0; c < t->cols(); ++c) {
          std::snprintf(buf, sizeof buf, "%.17g", (*t)(r, c));
          out << (c ? " " : "") << buf;
        }
        out << "\n";
      }
    }
  }
}

Model read_params(std::istream& in) {
  auto fail = [](const std::string& what) -> ConfigError {
    return ConfigError("parameter snapshot: " + what);
  };
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "inalu-params" || version != 1) {
    throw fail("missing 'inalu-params 1' header");
  }
  std::size_t count = 0;
  if (!(in >> word >> count) || word != "layers" || count == 0) throw fail("bad layer count");
  Model model;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t index = 0, rows = 0, cols = 0;
    std::string variant;
    if (!(in >> word >> index >> variant >> rows >> cols) || word != "layer" || index != i) {
      throw fail("bad header for layer " + std::to_string(i));
    }
    CellParams p = CellParams::zeros(parse_variant(variant), rows, cols);
    for (auto& [name, t] : p.named()) {
      std::string tag, full;
      std::size_t r = 0, c = 0;
      const std::string expected = std::to_string(i) + "." + name;
      if (!(in >> tag >> full >> r >> c) || tag != "matrix" || full != expected) {
        throw fail("expected matrix " + expected);
      }
      if (r != t->rows() || c != t->cols()) throw fail("wrong shape for " + expected);
      for (double& v : t->values()) {
        if (!(in >> v)) throw fail("truncated values for " + expected);
      }
    }
    model.push_back(std::move(p));
  }
  validate_model(model);
  return model;
}

}  // namespace inalu
