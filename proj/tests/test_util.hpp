#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "inalu/autodiff.hpp"
#include "inalu/tensor.hpp"

namespace testutil {

inline inalu::Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng,
                                   double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  inalu::Tensor t(r, c);
  for (double& v : t.values()) v = d(rng);
  return t;
}

using Builder =
    std::function<inalu::ad::Var(inalu::ad::Tape&, const std::vector<inalu::ad::Var>&)>;

inline double loss_at(const Builder& f, const std::vector<inalu::Tensor>& inputs) {
  inalu::ad::Tape tape;
  std::vector<inalu::ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

// Largest relative difference between tape gradients and central differences.
inline double max_fd_error(const Builder& f, std::vector<inalu::Tensor> inputs,
                           double h = 1e-6) {
  inalu::ad::Tape tape;
  std::vector<inalu::ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.parameter(t));
  const auto loss = f(tape, vars);
  tape.backward(loss);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const inalu::Tensor analytic = vars[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      inputs[k][i] = keep + h;
      const double up = loss_at(f, inputs);
      inputs[k][i] = keep - h;
      const double down = loss_at(f, inputs);
      inputs[k][i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
    }
  }
  return worst;
}

// Weighted sum with fixed random weights: makes every output entry matter
// to a scalar loss with distinct sensitivities.
inline inalu::ad::Var probe(inalu::ad::Tape& tape, inalu::ad::Var v, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return inalu::ad::sum(inalu::ad::mul(v, tape.constant(random_tensor(v.rows(), v.cols(), rng))));
}

}  // namespace testutil
