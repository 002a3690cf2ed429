#include "inalu/regularization.hpp"

#include <algorithm>
#include <cmath>

#include "inalu/errors.hpp"

namespace inalu {

void RegConfig::validate() const {
  if (!(t > 0.0)) throw ConfigError("regularization threshold t must be positive");
  if (!(scale >= 0.0)) throw ConfigError("regularization scale must be non-negative");
}

double reg_term(double w, double t) noexcept {
  return std::max(std::min(-w, w) + t, 0.0) / t;
}

double reg_term_slope(double w, double t) noexcept {
  const double mag = std::fabs(w);
  if (w == 0.0 || mag > t) return 0.0;
  return (w > 0.0 ? -1.0 : 1.0) / t;
}

double total_reg(const Model& model, const RegConfig& cfg) {
  double acc = 0.0;
  for (const CellParams& layer : model) {
    for (const auto& [name, tensor] : layer.named()) {
      for (double w : tensor->values()) acc += reg_term(w, cfg.t);
    }
  }
  return cfg.scale * acc;
}

ad::Var total_reg(std::span<const BoundCell> layers, const RegConfig& cfg) {
  if (layers.empty()) throw ConfigError("no layers to regularize");
  ad::Tape& tape = *layers.front().w_hat_a.tape();
  std::vector<ad::Var> terms;
  for (const BoundCell& layer : layers) {
    for (ad::Var w : layer.distinct()) {
      ad::Var hinge = ad::max_const(ad::rsub_scalar(cfg.t, ad::abs(w)), 0.0);
      terms.push_back(ad::sum(hinge));
    }
  }
  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return tape.scale(total, cfg.scale / cfg.t);
}

bool reg_active(int epoch, double current_loss, const RegConfig& cfg) noexcept {
  return epoch > cfg.activation_epoch && current_loss < cfg.activation_loss;
}

}  // namespace inalu
