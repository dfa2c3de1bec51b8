#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aio/numcore/tensor.hpp"

namespace aio::inline AIO_ABI {

struct GradCheckOptions {
  double h = 1e-3;
  double tol = 1e-3;
  /// Coordinates checked per input; 0 checks every coordinate.
  std::size_t coords_per_input = 0;
  /// Denominator floor of the relative error, so coordinates whose true
  /// gradient is ~0 are compared absolutely.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t coords_checked = 0;
  bool passed = false;
  // Worst coordinate.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;

  std::string summary() const;
};

/// Compares tape gradients of the scalar `f` with central differences
/// (f(x+h) - f(x-h)) / 2h taken in double. `f` must read the tensors in
/// `inputs` (by handle); they are perturbed in place and restored.
GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& opt = {});

}  // namespace aio::inline AIO_ABI
