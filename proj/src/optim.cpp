#include "fieldalign/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "fieldalign/tensor.hpp"

namespace fieldalign {

double lr_at(const ParamGroup& group, int iter) {
  require(group.lr_start > 0.0 && group.lr_end > 0.0,
          "lr_at: learning rates must be positive");
  require(group.total_iters > 0, "lr_at: total_iters must be positive");
  if (iter <= 0) return group.lr_start;
  if (iter >= group.total_iters) return group.lr_end;
  const double f = static_cast<double>(iter) / group.total_iters;
  return group.lr_start * std::pow(group.lr_end / group.lr_start, f);
}

double alpha_at(int iter, int start_iter, int end_iter, int bands) {
  require(start_iter < end_iter, "alpha_at: start_iter must precede end_iter");
  if (iter <= start_iter) return 0.0;
  if (iter >= end_iter) return static_cast<double>(bands);
  return bands * static_cast<double>(iter - start_iter) /
         (end_iter - start_iter);
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / corr1;
    const double vhat = state.v[i] / corr2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace fieldalign
