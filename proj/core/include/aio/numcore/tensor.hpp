#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "aio/numcore/errors.hpp"
#include "aio/numcore/real.hpp"

namespace aio::inline AIO_ABI {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocator. Vectorised reductions peel elements up to
/// the first aligned address, so a fixed alignment keeps their summation
/// order, and hence results, independent of where buffers land.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<Real, AlignedAllocator<Real>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor handle. Copies share storage; use `clone()` for a
/// deep copy. Gradients are accumulated into `grad()` by `Tape::backward`.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, const std::vector<Real>& values, bool requires_grad = false);
  Tensor(Shape shape, Buffer values, bool requires_grad = false);
  Tensor(Shape shape, std::initializer_list<Real> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const Real> values() const { return impl_->values; }
  /// Direct mutable access. Only for building fresh tensors and for the
  /// optimizer's in-place parameter update.
  std::span<Real> mutable_values() { return impl_->values; }
  Real item() const;
  Real at(std::size_t i) const { return impl_->values.at(i); }
  Real at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const Real> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated (zero-filled) on first use.
  std::span<Real> grad_buffer() const;
  void zero_grad() const;

  Tensor clone() const;
  /// Same values, no tape history, requires_grad = false.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    Buffer values;
    Buffer grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations executed while the tape is
/// active. `backward` walks the record in reverse, which is a reverse
/// topological order because every op is recorded after its inputs exist.
class Tape {
 public:
  using Backward = std::function<void()>;

  void record(Backward fn) { nodes_.push_back(std::move(fn)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Seeds d(root)/d(root) = 1, runs every recorded backward exactly once,
  /// then clears the record.
  void backward(const Tensor& root);

 private:
  std::vector<Backward> nodes_;
};

/// Makes `tape` the recording target for ops on this thread while alive.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on this thread while alive (inference mode).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Returns the active tape when any input requires a gradient, else null.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);

/// Adds `src` into the gradient buffer of `t` when `t` participates.
void accumulate_grad(const Tensor& t, std::span<const Real> src);

}  // namespace aio::inline AIO_ABI
