#pragma once

// Gradient suite over the double-precision core. The interface uses only
// standard types so float-precision programs can link it.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aio::diag {

/// Library errors raised inside the suite, with their kind tag.
struct DiagnosticError : std::runtime_error {
  DiagnosticError(std::string kind, const std::string& msg) : std::runtime_error(msg), kind(std::move(kind)) {}
  std::string kind;
};

struct GradSuiteOptions {
  /// Full key=value configuration (architecture, loss weights, seed).
  std::vector<std::pair<std::string, std::string>> config;
  // Smaller than the generic 1e-3: at 1e-3 the ReLU kinks and LayerNorm
  // curvature of the full model dominate the central difference.
  double step = 1e-5;
  double tolerance = 1e-3;
  /// Denominator floor of the relative error.
  double abs_floor = 1e-6;
  std::size_t samples_per_tensor = 4;
  /// Failing coordinates whose one-sided differences disagree are
  /// re-measured with step/10, at most this many times.
  std::size_t kink_retries = 2;
  std::size_t videos = 2;
};

struct TermReport {
  std::string name;
  double value = 0;
  double max_rel_error = 0;
  std::size_t coords = 0;
  std::size_t kink_retries = 0;
  std::string worst;  // parameter[index] analytic vs numeric
  bool passed = false;
};

struct GradSuiteReport {
  std::vector<TermReport> terms;
  std::size_t parameters = 0;
  double seconds = 0;
  bool passed = false;

  std::string text() const;
  std::string json() const;
  std::string first_failure() const;
};

/// L_cls, L_giou, L_1, L_cma, L_ima and L_total on a micro-batch drawn
/// from freshly rendered synthetic videos, all checked against central
/// differences of the same sampled parameter coordinates.
/// Throws DiagnosticError for invalid options or configuration.
GradSuiteReport run_grad_suite(const GradSuiteOptions& opt);

}  // namespace aio::diag
