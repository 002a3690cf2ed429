#include "inalu/autodiff.hpp"

#include <cmath>
#include <string>

#include "inalu/errors.hpp"
#include "inalu/kernels.hpp"

namespace inalu::ad {

namespace {

enum class Broadcast : std::uint8_t { none, scalar, row };

Broadcast broadcast_kind(const Tensor& operand, std::size_t rows, std::size_t cols) {
  if (operand.rows() == rows && operand.cols() == cols) return Broadcast::none;
  if (operand.rows() == 1 && operand.cols() == 1) return Broadcast::scalar;
  if (operand.rows() == 1 && operand.cols() == cols) return Broadcast::row;
  throw ConfigError("cannot broadcast " + operand.shape_string() + " to [" +
                    std::to_string(rows) + "x" + std::to_string(cols) + "]");
}

std::size_t source_index(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::none:
      return i;
    case Broadcast::scalar:
      return 0;
    case Broadcast::row:
      return i % cols;
  }
  return i;
}

// Result shape of a broadcasting binary op: the larger operand wins.
std::pair<std::size_t, std::size_t> result_shape(const Tensor& a, const Tensor& b) {
  std::size_t rows = std::max(a.rows(), b.rows());
  std::size_t cols = std::max(a.cols(), b.cols());
  if (a.size() == 1 && b.size() == 1) return {1, 1};
  if (a.size() == 1) return {b.rows(), b.cols()};
  if (b.size() == 1) return {a.rows(), a.cols()};
  return {rows, cols};
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const Tensor& Var::value() const { return tape_->value(*this); }
const Tensor& Var::grad() const { return tape_->grad(*this); }

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ConfigError("variable does not belong to this tape");
  }
}

Tape::Node& Tape::node(Var v) {
  check_owner(v);
  return nodes_[v.id_];
}

const Tape::Node& Tape::node(Var v) const {
  check_owner(v);
  return nodes_[v.id_];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty() && !n.value.empty()) {
    auto& slot = const_cast<Tensor&>(n.grad);
    slot = Tensor(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const std::size_t m = na.value.rows(), k = na.value.cols(), n = nb.value.cols();
  if (nb.value.rows() != k) {
    throw ConfigError("matmul dimension mismatch: " + na.value.shape_string() + " * " +
                      nb.value.shape_string());
  }
  Node out;
  out.kind = OpKind::matmul;
  out.lhs = a.id_;
  out.rhs = b.id_;
  out.requires_grad = na.requires_grad || nb.requires_grad;
  out.value = Tensor(m, n);
  kernels::gemm(na.value.values(), nb.value.values(), out.value.values(), m, k, n);
  return push(std::move(out));
}

Var Tape::elementwise(BinaryOp op, Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const auto [rows, cols] = result_shape(na.value, nb.value);
  const Broadcast ka = broadcast_kind(na.value, rows, cols);
  const Broadcast kb = broadcast_kind(nb.value, rows, cols);

  Node out;
  out.kind = OpKind::binary;
  out.op = static_cast<std::uint8_t>(op);
  out.lhs = a.id_;
  out.rhs = b.id_;
  out.requires_grad = na.requires_grad || nb.requires_grad;
  out.value = Tensor(rows, cols);
  const std::size_t total = rows * cols;
  for (std::size_t i = 0; i < total; ++i) {
    const double x = na.value[source_index(ka, i, cols)];
    const double y = nb.value[source_index(kb, i, cols)];
    switch (op) {
      case BinaryOp::add:
        out.value[i] = x + y;
        break;
      case BinaryOp::sub:
        out.value[i] = x - y;
        break;
      case BinaryOp::mul:
        out.value[i] = x * y;
        break;
    }
  }
  return push(std::move(out));
}

Var Tape::unary(UnaryOp op, Var a) {
  const Node& na = node(a);
  Node out;
  out.kind = OpKind::unary;
  out.op = static_cast<std::uint8_t>(op);
  out.lhs = a.id_;
  out.requires_grad = na.requires_grad && op != UnaryOp::sign;
  out.value = Tensor(na.value.rows(), na.value.cols());
  const std::size_t total = na.value.size();
  for (std::size_t i = 0; i < total; ++i) {
    const double x = na.value[i];
    double y = 0.0;
    switch (op) {
      case UnaryOp::tanh:
        y = std::tanh(x);
        break;
      case UnaryOp::sigmoid:
        y = sigmoid(x);
        break;
      case UnaryOp::exp:
        y = std::exp(x);
        break;
      case UnaryOp::log:
        // NaN is propagated rather than rejected.
        if (x <= 0.0) {
          throw NumericDomainError("log of non-positive value " + std::to_string(x));
        }
        y = std::log(x);
        break;
      case UnaryOp::abs:
        y = std::fabs(x);
        break;
      case UnaryOp::sign:
        y = sign_of(x);
        break;
      case UnaryOp::negate:
        y = -x;
        break;
    }
    out.value[i] = y;
  }
  return push(std::move(out));
}

Var Tape::clamp(ClampOp op, Var a, double c) {
  const Node& na = node(a);
  Node out;
  out.kind = OpKind::clamp;
  out.op = static_cast<std::uint8_t>(op);
  out.lhs = a.id_;
  out.constant = c;
  out.requires_grad = na.requires_grad;
  out.value = Tensor(na.value.rows(), na.value.cols());
  const std::size_t total = na.value.size();
  for (std::size_t i = 0; i < total; ++i) {
    const double x = na.value[i];
    if (op == ClampOp::min_const) {
      out.value[i] = x <= c ? x : c;
    } else {
      out.value[i] = x >= c ? x : c;
    }
  }
  return push(std::move(out));
}

Var Tape::row_product(Var a) {
  const Node& na = node(a);
  Node out;
  out.kind = OpKind::row_product;
  out.lhs = a.id_;
  out.requires_grad = na.requires_grad;
  out.value = Tensor(na.value.rows(), 1);
  kernels::row_product(na.value.values(), out.value.values(), na.value.rows(),
                       na.value.cols());
  return push(std::move(out));
}

Var Tape::mse_loss(Var pred, Var real) {
  const Node& np = node(pred);
  const Node& nr = node(real);
  if (!np.value.same_shape(nr.value)) {
    throw ConfigError("mse shape mismatch: " + np.value.shape_string() + " vs " +
                      nr.value.shape_string());
  }
  if (np.value.empty()) throw ConfigError("mse of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < np.value.size(); ++i) {
    const double d = np.value[i] - nr.value[i];
    acc += d * d;
  }
  Node out;
  out.kind = OpKind::mse;
  out.lhs = pred.id_;
  out.rhs = real.id_;
  out.requires_grad = np.requires_grad || nr.requires_grad;
  out.value = Tensor::scalar(acc / static_cast<double>(np.value.size()));
  return push(std::move(out));
}

Var Tape::sum(Var a) {
  const Node& na = node(a);
  double acc = 0.0;
  for (double v : na.value.values()) acc += v;
  Node out;
  out.kind = OpKind::sum;
  out.lhs = a.id_;
  out.requires_grad = na.requires_grad;
  out.value = Tensor::scalar(acc);
  return push(std::move(out));
}

Var Tape::scale(Var a, double c) {
  const Node& na = node(a);
  Node out;
  out.kind = OpKind::scale;
  out.lhs = a.id_;
  out.constant = c;
  out.requires_grad = na.requires_grad;
  out.value = na.value;
  for (double& v : out.value.values()) v *= c;
  return push(std::move(out));
}

Var Tape::transpose(Var a) {
  const Node& na = node(a);
  Node out;
  out.kind = OpKind::transpose;
  out.lhs = a.id_;
  out.requires_grad = na.requires_grad;
  out.value = na.value.transposed();
  return push(std::move(out));
}

Var Tape::column(Var a, std::size_t j) {
  const Node& na = node(a);
  if (j >= na.value.cols()) throw ConfigError("column index out of range");
  Node out;
  out.kind = OpKind::column;
  out.lhs = a.id_;
  out.index = j;
  out.requires_grad = na.requires_grad;
  out.value = Tensor(na.value.rows(), 1);
  for (std::size_t r = 0; r < na.value.rows(); ++r) out.value(r, 0) = na.value(r, j);
  return push(std::move(out));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat of zero tensors");
  const std::size_t rows = node(parts.front()).value.rows();
  std::size_t cols = 0;
  Node out;
  out.kind = OpKind::concat_cols;
  for (Var p : parts) {
    const Node& np = node(p);
    if (np.value.rows() != rows) throw ConfigError("concat row mismatch");
    cols += np.value.cols();
    out.parts.push_back(p.id_);
    out.requires_grad = out.requires_grad || np.requires_grad;
  }
  out.value = Tensor(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = node(p).value;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out.value(r, offset + c) = v(r, c);
    offset += v.cols();
  }
  return push(std::move(out));
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grad_slot(id);
  for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

void Tape::backward(Var loss) {
  const Node& nl = node(loss);
  if (nl.value.rows() != 1 || nl.value.cols() != 1) {
    throw ConfigError("backward() needs a 1x1 loss, got " + nl.value.shape_string());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nl.requires_grad) return;
  grad_slot(loss.id_)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    if (nodes_[id].requires_grad && !nodes_[id].grad.empty()) backprop_node(id);
  }
}

void Tape::backprop_node(std::size_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = n.grad;
  switch (n.kind) {
    case OpKind::leaf:
      return;

    case OpKind::matmul: {
      const Tensor& a = nodes_[n.lhs].value;
      const Tensor& b = nodes_[n.rhs].value;
      const std::size_t m = a.rows(), k = a.cols(), cols = b.cols();
      if (nodes_[n.lhs].requires_grad) {
        Tensor ga(m, k);
        kernels::gemm_nt(g.values(), b.values(), ga.values(), m, cols, k);
        accumulate(n.lhs, ga);
      }
      if (nodes_[n.rhs].requires_grad) {
        Tensor gb(k, cols);
        kernels::gemm_tn(a.values(), g.values(), gb.values(), m, k, cols);
        accumulate(n.rhs, gb);
      }
      return;
    }

    case OpKind::binary: {
      const Tensor& a = nodes_[n.lhs].value;
      const Tensor& b = nodes_[n.rhs].value;
      const std::size_t cols = n.value.cols();
      const Broadcast ka = broadcast_kind(a, n.value.rows(), cols);
      const Broadcast kb = broadcast_kind(b, n.value.rows(), cols);
      const auto op = static_cast<BinaryOp>(n.op);
      const bool want_a = nodes_[n.lhs].requires_grad;
      const bool want_b = nodes_[n.rhs].requires_grad;
      Tensor ga = want_a ? Tensor(a.rows(), a.cols()) : Tensor();
      Tensor gb = want_b ? Tensor(b.rows(), b.cols()) : Tensor();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t ia = source_index(ka, i, cols);
        const std::size_t ib = source_index(kb, i, cols);
        switch (op) {
          case BinaryOp::add:
            if (want_a) ga[ia] += g[i];
            if (want_b) gb[ib] += g[i];
            break;
          case BinaryOp::sub:
            if (want_a) ga[ia] += g[i];
            if (want_b) gb[ib] -= g[i];
            break;
          case BinaryOp::mul:
            if (want_a) ga[ia] += g[i] * b[ib];
            if (want_b) gb[ib] += g[i] * a[ia];
            break;
        }
      }
      // lhs and rhs may be the same node (x * x); accumulate handles it.
      if (want_a) accumulate(n.lhs, ga);
      if (want_b) accumulate(n.rhs, gb);
      return;
    }

    case OpKind::unary: {
      const Tensor& x = nodes_[n.lhs].value;
      const Tensor& y = n.value;
      Tensor gx(x.rows(), x.cols());
      const auto op = static_cast<UnaryOp>(n.op);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        switch (op) {
          case UnaryOp::tanh:
            d = 1.0 - y[i] * y[i];
            break;
          case UnaryOp::sigmoid:
            d = y[i] * (1.0 - y[i]);
            break;
          case UnaryOp::exp:
            d = y[i];
            break;
          case UnaryOp::log:
            d = 1.0 / x[i];
            break;
          case UnaryOp::abs:
            d = sign_of(x[i]);
            break;
          case UnaryOp::sign:
            d = 0.0;
            break;
          case UnaryOp::negate:
            d = -1.0;
            break;
        }
        gx[i] = g[i] * d;
      }
      accumulate(n.lhs, gx);
      return;
    }

    case OpKind::clamp: {
      const Tensor& x = nodes_[n.lhs].value;
      Tensor gx(x.rows(), x.cols());
      const bool is_min = static_cast<ClampOp>(n.op) == ClampOp::min_const;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const bool tensor_branch = is_min ? x[i] <= n.constant : x[i] >= n.constant;
        gx[i] = tensor_branch ? g[i] : 0.0;
      }
      accumulate(n.lhs, gx);
      return;
    }

    case OpKind::row_product: {
      const Tensor& x = nodes_[n.lhs].value;
      const std::size_t rows = x.rows(), cols = x.cols();
      Tensor gx(rows, cols);
      // prefix/suffix products so zero factors are handled exactly
      std::vector<double> prefix(cols + 1), suffix(cols + 1);
      for (std::size_t r = 0; r < rows; ++r) {
        prefix[0] = 1.0;
        for (std::size_t c = 0; c < cols; ++c) prefix[c + 1] = prefix[c] * x(r, c);
        suffix[cols] = 1.0;
        for (std::size_t c = cols; c-- > 0;) suffix[c] = suffix[c + 1] * x(r, c);
        for (std::size_t c = 0; c < cols; ++c) gx(r, c) = g(r, 0) * prefix[c] * suffix[c + 1];
      }
      accumulate(n.lhs, gx);
      return;
    }

    case OpKind::mse: {
      const Tensor& p = nodes_[n.lhs].value;
      const Tensor& r = nodes_[n.rhs].value;
      const double coeff = 2.0 * g[0] / static_cast<double>(p.size());
      Tensor gp(p.rows(), p.cols());
      for (std::size_t i = 0; i < p.size(); ++i) gp[i] = coeff * (p[i] - r[i]);
      accumulate(n.lhs, gp);
      if (nodes_[n.rhs].requires_grad) {
        for (double& v : gp.values()) v = -v;
        accumulate(n.rhs, gp);
      }
      return;
    }

    case OpKind::sum: {
      const Tensor& x = nodes_[n.lhs].value;
      accumulate(n.lhs, Tensor(x.rows(), x.cols(), g[0]));
      return;
    }

    case OpKind::scale: {
      Tensor gx = g;
      for (double& v : gx.values()) v *= n.constant;
      accumulate(n.lhs, gx);
      return;
    }

    case OpKind::transpose:
      accumulate(n.lhs, g.transposed());
      return;

    case OpKind::column: {
      const Tensor& x = nodes_[n.lhs].value;
      Tensor gx(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r) gx(r, n.index) = g(r, 0);
      accumulate(n.lhs, gx);
      return;
    }

    case OpKind::concat_cols: {
      std::size_t offset = 0;
      for (std::size_t part : n.parts) {
        const Tensor& v = nodes_[part].value;
        Tensor gp(v.rows(), v.cols());
        for (std::size_t r = 0; r < v.rows(); ++r)
          for (std::size_t c = 0; c < v.cols(); ++c) gp(r, c) = g(r, offset + c);
        accumulate(part, gp);
        offset += v.cols();
      }
      return;
    }
  }
}

std::vector<std::int8_t> Tape::branch_signature() const {
  std::vector<std::int8_t> sig;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::unary) {
      const auto op = static_cast<UnaryOp>(n.op);
      if (op != UnaryOp::abs && op != UnaryOp::sign) continue;
      for (double v : nodes_[n.lhs].value.values())
        sig.push_back(static_cast<std::int8_t>(sign_of(v)));
    } else if (n.kind == OpKind::clamp) {
      const bool is_min = static_cast<ClampOp>(n.op) == ClampOp::min_const;
      for (double v : nodes_[n.lhs].value.values()) {
        // ties count as their own branch so "sitting on the kink" differs from both sides
        const std::int8_t side = v == n.constant ? 0 : ((is_min ? v < n.constant : v > n.constant) ? 1 : -1);
        sig.push_back(side);
      }
    }
  }
  return sig;
}

Var matmul(Var a, Var b) { return a.tape()->matmul(a, b); }
Var add(Var a, Var b) { return a.tape()->elementwise(BinaryOp::add, a, b); }
Var sub(Var a, Var b) { return a.tape()->elementwise(BinaryOp::sub, a, b); }
Var mul(Var a, Var b) { return a.tape()->elementwise(BinaryOp::mul, a, b); }
Var tanh(Var a) { return a.tape()->unary(UnaryOp::tanh, a); }
Var sigmoid(Var a) { return a.tape()->unary(UnaryOp::sigmoid, a); }
Var exp(Var a) { return a.tape()->unary(UnaryOp::exp, a); }
Var log(Var a) { return a.tape()->unary(UnaryOp::log, a); }
Var abs(Var a) { return a.tape()->unary(UnaryOp::abs, a); }
Var sign(Var a) { return a.tape()->unary(UnaryOp::sign, a); }
Var negate(Var a) { return a.tape()->unary(UnaryOp::negate, a); }
Var min_const(Var a, double c) { return a.tape()->clamp(ClampOp::min_const, a, c); }
Var max_const(Var a, double c) { return a.tape()->clamp(ClampOp::max_const, a, c); }
Var row_product(Var a) { return a.tape()->row_product(a); }
Var mse_loss(Var pred, Var real) { return pred.tape()->mse_loss(pred, real); }
Var sum(Var a) { return a.tape()->sum(a); }
Var scale(Var a, double c) { return a.tape()->scale(a, c); }

Var add_scalar(Var a, double c) {
  Tape* t = a.tape();
  return t->elementwise(BinaryOp::add, a, t->constant(Tensor::scalar(c)));
}

Var rsub_scalar(double c, Var a) {
  Tape* t = a.tape();
  return t->elementwise(BinaryOp::sub, t->constant(Tensor::scalar(c)), a);
}

}  // namespace inalu::ad
