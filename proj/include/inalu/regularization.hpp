#pragma once

#include <span>

#include "inalu/autodiff.hpp"
#include "inalu/cells.hpp"

namespace inalu {

/// Piecewise-linear penalty that pushes W_hat, M_hat and G away from zero
/// until |w| reaches the discretization threshold t.
struct RegConfig {
  double t = 20.0;
  double scale = 1.0;
  int activation_epoch = 10;
  double activation_loss = 1.0;

  void validate() const;
};

/// (1/t) * max(min(-w, w) + t, 0)
double reg_term(double w, double t) noexcept;

/// Derivative of reg_term with the tape's conventions: 0 at w == 0 and for
/// |w| > t, -sign(w)/t otherwise (including |w| == t).
double reg_term_slope(double w, double t) noexcept;

/// scale * sum of reg_term over every entry of every W_hat, M_hat and G.
double total_reg(const Model& model, const RegConfig& cfg);

/// Same quantity recorded on the tape of the bound layers.
ad::Var total_reg(std::span<const BoundCell> layers, const RegConfig& cfg);

/// Regularization applies after `activation_epoch` full epochs while the
/// data loss (without the penalty itself) is below `activation_loss`.
/// `epoch` is 1-based.
bool reg_active(int epoch, double current_loss, const RegConfig& cfg) noexcept;

}  // namespace inalu
