#pragma once

#include <Eigen/Core>

#include "aio/numcore/tensor.hpp"

namespace aio::inline AIO_ABI::detail {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

inline ConstMatMap as_matrix(std::span<const Real> v, std::size_t rows, std::size_t cols) {
  return ConstMatMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatMap as_matrix(std::span<Real> v, std::size_t rows, std::size_t cols) {
  return MatMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// Marks `out` as differentiable and returns the tape to record on, or null
/// when no input participates in differentiation.
inline Tape* track(Tensor& out, std::initializer_list<const Tensor*> inputs) {
  Tape* tape = recording_tape(inputs);
  if (tape) out.set_requires_grad(true);
  return tape;
}

inline bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

void require_2d(const Tensor& t, const char* op);
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace aio::inline AIO_ABI::detail
