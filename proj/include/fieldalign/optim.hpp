#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fieldalign {

// One learning-rate schedule; lr decays geometrically from lr_start at
// iteration 0 to lr_end at total_iters.
struct ParamGroup {
  std::string name;
  double lr_start = 1e-3;
  double lr_end = 1e-3;
  int total_iters = 1;
};

// Exponential interpolation with endpoints exact; iters outside the range
// clamp to the endpoints.
double lr_at(const ParamGroup& group, int iter);

// 0 before start_iter, L after end_iter, linear ramp in between.
double alpha_at(int iter, int start_iter, int end_iter, int bands);

struct AdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Standard bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr);

}  // namespace fieldalign
