#include "aio/numcore/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace aio::inline AIO_ABI {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, const std::vector<Real>& values, bool requires_grad)
    : Tensor(std::move(shape), Buffer(values.begin(), values.end()), requires_grad) {}

Tensor::Tensor(Shape shape, std::initializer_list<Real> values, bool requires_grad)
    : Tensor(std::move(shape), Buffer(values), requires_grad) {}

Tensor::Tensor(Shape shape, Buffer values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero extent");
  }
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), Real(0), requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Real Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

Real Tensor::at(std::size_t i, std::size_t j) const {
  if (ndim() != 2) throw DimensionError("at(i,j) on tensor of shape " + shape_str(shape()));
  return impl_->values.at(i * impl_->shape[1] + j);
}

std::span<Real> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), Real(0));
  return impl_->grad;
}

void Tensor::zero_grad() const { std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0)); }

Tensor Tensor::clone() const {
  Tensor out(impl_->shape, impl_->values, impl_->requires_grad);
  out.impl_->grad = impl_->grad;
  return out;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->values, false); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1) throw ContractError("backward root must be scalar, got " + shape_str(root.shape()));
  if (root.requires_grad()) {
    auto g = root.grad_buffer();
    g[0] += Real(1);
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return nullptr;
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return g_active_tape;
  }
  return nullptr;
}

void accumulate_grad(const Tensor& t, std::span<const Real> src) {
  if (!t.defined() || !t.requires_grad()) return;
  auto g = t.grad_buffer();
  for (std::size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

}  // namespace aio::inline AIO_ABI
