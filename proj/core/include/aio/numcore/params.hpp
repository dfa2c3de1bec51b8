#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "aio/numcore/rng.hpp"
#include "aio/numcore/tensor.hpp"

namespace aio::inline AIO_ABI {

/// Ordered name -> parameter table. Registration order is the checkpoint
/// order and the optimizer order.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  /// Registers `t` (marked requires_grad) and returns the stored handle.
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;
  void zero_grad() const;

 private:
  std::vector<Entry> entries_;
};

/// Truncated normal N(0, sigma^2) clipped at 2 sigma.
Tensor trunc_normal(Shape shape, double sigma, Rng& rng);
Tensor normal(Shape shape, double sigma, Rng& rng);

}  // namespace aio::inline AIO_ABI
