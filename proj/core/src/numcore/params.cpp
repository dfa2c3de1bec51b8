#include "aio/numcore/params.hpp"

#include <algorithm>

namespace aio::inline AIO_ABI {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ContractError("unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParamStore::zero_grad() const {
  for (const auto& e : entries_) e.second.zero_grad();
}

Tensor trunc_normal(Shape shape, double sigma, Rng& rng) {
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = Real(rng.truncated_normal(sigma));
  return Tensor(std::move(shape), std::move(v));
}

Tensor normal(Shape shape, double sigma, Rng& rng) {
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = Real(rng.normal() * sigma);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace aio::inline AIO_ABI
