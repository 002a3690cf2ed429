#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation in creation order, which is also a valid
// topological order, so backward() is a single reverse sweep. Tensors built
// with Tape::parameter() receive gradients; Tape::constant() inputs do not.
//
// Broadcasting is limited to two cases: a 1x1 operand against any shape, and
// a 1xC row against an RxC matrix. Anything else is a ConfigError.
//
// Non-smooth points:
//   sign      zero gradient everywhere
//   abs       sign(x), with 0 at x == 0
//   min/max   ties select the tensor branch, which passes the gradient through

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "inalu/tensor.hpp"

namespace inalu::ad {

enum class BinaryOp : std::uint8_t { add, sub, mul };
enum class UnaryOp : std::uint8_t { tanh, sigmoid, exp, log, abs, sign, negate };
enum class ClampOp : std::uint8_t { min_const, max_const };

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  binary,
  unary,
  clamp,
  row_product,
  mse,
  sum,
  scale,
  transpose,
  column,
  concat_cols,
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  Var matmul(Var a, Var b);
  Var elementwise(BinaryOp op, Var a, Var b);
  Var unary(UnaryOp op, Var a);
  Var clamp(ClampOp op, Var a, double c);
  Var row_product(Var a);
  Var mse_loss(Var pred, Var real);
  Var sum(Var a);
  Var scale(Var a, double c);
  Var transpose(Var a);
  Var column(Var a, std::size_t j);
  Var concat_cols(std::span<const Var> parts);

  /// Reverse sweep from a 1x1 node. Gradients from a previous sweep are
  /// discarded first.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  /// Zero tensor of matching shape when the node received no gradient.
  const Tensor& grad(Var v) const;

  /// Which branch every abs/sign/min/max entry took in the forward pass.
  /// Two forward passes with equal signatures lie on the same smooth piece.
  std::vector<std::int8_t> branch_signature() const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::uint8_t op = 0;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    std::vector<std::size_t> parts;
    double constant = 0.0;
    std::size_t index = 0;
    bool requires_grad = false;
    Tensor value;
    Tensor grad;
  };

  Var push(Node node);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check_owner(Var v) const;
  Tensor& grad_slot(std::size_t id);
  void accumulate(std::size_t id, const Tensor& g);
  void backprop_node(std::size_t id);

  std::deque<Node> nodes_;
};

// Operator-style helpers; all operands must live on the same tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
Var sign(Var a);
Var negate(Var a);
Var min_const(Var a, double c);
Var max_const(Var a, double c);
Var row_product(Var a);
Var mse_loss(Var pred, Var real);
Var sum(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// c - a, with c broadcast.
Var rsub_scalar(double c, Var a);

/// Numerically stable logistic function.
double sigmoid(double x) noexcept;

}  // namespace inalu::ad
