#pragma once

#include <exception>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fieldalign {

inline int hardware_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Evaluate fn(0..n-1) and return results indexed by chunk. workers <= 1 runs
// the serial reference loop; otherwise chunks run under OpenMP. Outputs are
// identical either way, and callers reduce them in chunk order, so training
// trajectories do not depend on the worker count. An exception thrown by any
// chunk is captured and rethrown after the region joins (the first chunk
// index wins).
template <typename Result>
std::vector<Result> chunk_map(int n, int workers,
                              const std::function<Result(int)>& fn) {
  std::vector<Result> out(n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(n);
  bool failed = false;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
#endif
  for (int i = 0; i < n; ++i) {
    try {
      out[i] = fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
      failed = true;
    }
  }
  if (failed)
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  return out;
}

// Ordered reduction of per-chunk gradient buffers into one accumulator.
inline void reduce_in_order(std::vector<std::vector<double>>& partials,
                            std::vector<double>& out) {
  for (const auto& p : partials)
    for (size_t i = 0; i < p.size(); ++i) out[i] += p[i];
}

}  // namespace fieldalign
