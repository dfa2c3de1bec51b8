#pragma once

#include <vector>

#include "aio/numcore/rng.hpp"
#include "aio/numcore/tensor.hpp"

namespace testing {

inline aio::Tensor random_tensor(aio::Shape shape, aio::Rng& rng, double lo = -1, double hi = 1) {
  std::vector<aio::Real> v(aio::shape_numel(shape));
  for (auto& x : v) x = aio::Real(rng.uniform(lo, hi));
  return aio::Tensor(std::move(shape), std::move(v));
}

inline std::vector<double> to_vec(const aio::Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline bool bit_equal(const aio::Tensor& a, const aio::Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace testing
