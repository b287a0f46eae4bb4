#pragma once

#include <cstddef>
#include <functional>

#include "mediqa/numcore/tensor.hpp"

namespace mediqa::nc {

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so components whose true
  /// gradient is ~0 are judged on absolute error instead.
  double floor = 1e-6;
  /// Check at most this many elements (evenly strided); 0 checks all.
  std::size_t max_elements = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Compares the tape gradient of scalar `f` with respect to `x` against
/// central differences. `x` is perturbed in place and restored. `f` may
/// ignore its argument and read `x` through shared storage (parameters).
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           Tensor x, const GradCheckOptions& options = {});

}  // namespace mediqa::nc
