#pragma once

// NALU and iNALU layers built on the autodiff tape.
//
//   W   = tanh(W_hat) * sigmoid(M_hat)            combined weight in (-1, 1)
//   a   = x W_a                                    summative path
//   m   = exp(log(|x| + eps) W_m)                  NALU multiplicative path
//   m   = exp(min(log(max(|x|, eps)) W_m, omega))  iNALU, clipped
//   msv = prod_i (sign(x_i) |W_ij| + 1 - |W_ij|)   sign of the product, per output j
//   g   = sigmoid(x G)                             NALU, input dependent
//   g   = sigmoid(G)                               iNALU, one gate per output
//   y   = g a + (1 - g) m        (NALU)
//   y   = g a + (1 - g) m msv    (iNALU)

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "inalu/autodiff.hpp"
#include "inalu/tensor.hpp"

namespace inalu {

enum class CellVariant {
  nalu_vector_gate,
  nalu_matrix_gate,
  inalu_shared_weights,
  inalu_independent_weights,
};

inline constexpr CellVariant kAllVariants[] = {
    CellVariant::nalu_vector_gate,
    CellVariant::nalu_matrix_gate,
    CellVariant::inalu_shared_weights,
    CellVariant::inalu_independent_weights,
};

std::string_view to_string(CellVariant v) noexcept;
CellVariant parse_variant(std::string_view name);

constexpr bool is_inalu(CellVariant v) noexcept {
  return v == CellVariant::inalu_shared_weights || v == CellVariant::inalu_independent_weights;
}

constexpr bool has_independent_weights(CellVariant v) noexcept {
  return v == CellVariant::inalu_independent_weights;
}

struct CellHyper {
  double epsilon = 1e-7;
  double omega = 20.0;

  void validate() const;
};

/// Gate parameter shape: in x 1 (vector gate), in x out (matrix gate),
/// 1 x out (iNALU).
std::pair<std::size_t, std::size_t> gate_shape(CellVariant v, std::size_t in, std::size_t out);

/// Learnable matrices of one layer. Shared-weight variants keep only the
/// `_a` pair; the multiplicative path reads the same tensors.
struct CellParams {
  CellVariant variant = CellVariant::inalu_independent_weights;
  Tensor w_hat_a;
  Tensor m_hat_a;
  Tensor w_hat_m;
  Tensor m_hat_m;
  Tensor gate;

  static CellParams zeros(CellVariant variant, std::size_t in, std::size_t out);

  std::size_t in_dim() const noexcept { return w_hat_a.rows(); }
  std::size_t out_dim() const noexcept { return w_hat_a.cols(); }

  const Tensor& w_hat_mul() const noexcept {
    return has_independent_weights(variant) ? w_hat_m : w_hat_a;
  }
  const Tensor& m_hat_mul() const noexcept {
    return has_independent_weights(variant) ? m_hat_m : m_hat_a;
  }

  /// Distinct learnable tensors with their names, in a fixed order:
  /// W_hat_a M_hat_a [W_hat_m M_hat_m] G. Shared variants name their pair
  /// W_hat / M_hat.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  /// Throws ConfigError on inconsistent shapes.
  void validate() const;
  bool all_finite() const;
};

using Model = std::vector<CellParams>;

/// Checks layer-to-layer dimensions and each layer's shapes.
void validate_model(const Model& model);

/// Parameters of one layer placed on a tape. For shared-weight variants the
/// multiplicative handles are the same nodes as the summative ones, so both
/// paths accumulate into one gradient.
struct BoundCell {
  CellVariant variant = CellVariant::inalu_independent_weights;
  ad::Var w_hat_a;
  ad::Var m_hat_a;
  ad::Var w_hat_m;
  ad::Var m_hat_m;
  ad::Var gate;

  /// Nodes for each entry of CellParams::named(), same order.
  std::vector<ad::Var> distinct() const;
};

BoundCell bind_params(ad::Tape& tape, const CellParams& params, bool trainable);
std::vector<BoundCell> bind_params(ad::Tape& tape, const Model& model, bool trainable);

struct ForwardTrace {
  ad::Var a;
  ad::Var m;
  ad::Var g;
  /// One N x in matrix per output column (iNALU only).
  std::vector<ad::Var> msm;
  /// N x out (iNALU only).
  ad::Var msv;
  ad::Var y;
};

ad::Var combined_weight(ad::Var w_hat, ad::Var m_hat);
ad::Var summative_path(ad::Var x, ad::Var w);
ad::Var multiplicative_path(ad::Var x, ad::Var w, const CellHyper& hyper, bool clipped);

struct SignCorrection {
  std::vector<ad::Var> msm;
  ad::Var msv;
};
SignCorrection sign_correction(ad::Var x, ad::Var w);

ad::Var gate_input_dependent(ad::Var x, ad::Var gate);
ad::Var gate_independent(ad::Var gate);

/// One layer. Throws InvariantViolation if an iNALU output is not finite.
ForwardTrace forward(const BoundCell& cell, const CellHyper& hyper, ad::Var x);

/// Sequential application; returns the last layer's output.
ad::Var stack(std::span<const BoundCell> layers, const CellHyper& hyper, ad::Var x,
              std::vector<ForwardTrace>* traces = nullptr);

/// Forward pass without gradients.
Tensor predict(const Model& model, const CellHyper& hyper, const Tensor& x);

// Plain-text parameter snapshot:
//
//   inalu-params 1
//   layers <L>
//   layer <i> <variant> <in> <out>
//   matrix <name> <rows> <cols>
//   <rows lines of cols values, %.17g>
//   ...
//
// Matrix names are "<layer>.<tensor>", e.g. "0.W_hat_a"; each layer block
// lists its matrices in CellParams::named() order.
void write_params(std::ostream& out, const Model& model);
Model read_params(std::istream& in);

}  // namespace inalu
