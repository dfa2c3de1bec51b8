#pragma once

#include <cstdint>
#include <vector>

#include "aio/numcore/params.hpp"
#include "aio/pipeline/config.hpp"

namespace aio::inline AIO_ABI {

struct AdamWConfig {
  double lr = 4e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t warmup = 0;

  static AdamWConfig from(const Config& c);
};

/// Linear warmup then cosine decay from `peak` to 0 over `total` steps.
double cosine_lr(double peak, std::uint64_t step, std::uint64_t total, std::uint64_t warmup = 0);

/// AdamW with decoupled weight decay and global-norm gradient clipping.
/// Moments live at storage precision and follow the parameter order.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamStore& params, AdamWConfig cfg);

  /// Clips, updates every parameter with learning rate `lr` and returns the
  /// pre-clip gradient norm.
  double step(const ParamStore& params, double lr);

  const AdamWConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  std::vector<std::vector<Real>>& first_moments() { return m_; }
  std::vector<std::vector<Real>>& second_moments() { return v_; }
  const std::vector<std::vector<Real>>& first_moments() const { return m_; }
  const std::vector<std::vector<Real>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AdamWConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

/// sqrt of the sum of squared gradients over all parameters, in double.
double global_grad_norm(const ParamStore& params);

}  // namespace aio::inline AIO_ABI
