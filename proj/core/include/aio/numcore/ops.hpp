#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aio/numcore/tensor.hpp"

// Differentiable primitives. Every op records its backward on the active tape
// when at least one input requires a gradient. Reductions accumulate in
// double; matrix products use Eigen at the storage precision.

namespace aio::inline AIO_ABI {

// --- shape ------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // 2-D only

/// Rows [begin, begin+count) of the leading axis of a 2-D tensor.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
/// Columns [begin, begin+count) of a 2-D tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Stacks 1-D tensors of equal length into a [n, d] matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);

/// x is [B*na, d] and y is [B*nb, d]; returns [B*(na+nb), d] where each block
/// holds the na rows of x followed by the nb rows of y.
Tensor concat_blocks(const Tensor& x, const Tensor& y, std::size_t blocks);
/// Inverse selection of concat_blocks: rows [offset, offset+count) of every
/// block of a [B*n, d] tensor.
Tensor slice_blocks(const Tensor& x, std::size_t blocks, std::size_t offset, std::size_t count);

/// table[V, d] indexed by ids -> [ids.size(), d].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

// --- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[n, in] * w[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor add_scalar(const Tensor& x, Real value);
Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

/// x[n*k, d] + y[k, d] tiled n times along the rows (k may equal n*k).
Tensor add_tiled(const Tensor& x, const Tensor& y);
/// x[n, d] + v[d] on every row.
Tensor add_rowwise(const Tensor& x, const Tensor& v);
/// x[B*n, d] scaled elementwise by gates[B, d], block b by row b.
Tensor mul_blocks(const Tensor& x, const Tensor& gates);

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// x[B*n, d] with constant weights[B*n] -> [B, d], out_b = sum_i w_i x_i over block b.
Tensor block_weighted_sum(const Tensor& x, std::span<const Real> weights, std::size_t blocks);

// --- normalisation ----------------------------------------------------------

/// Softmax along `axis`; only the last axis is supported.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = Real(1e-5));
/// Scales every row of a 2-D tensor to unit L2 norm (norm guarded by eps).
Tensor l2_normalize_rows(const Tensor& x, Real eps = Real(1e-8));

// --- structured -------------------------------------------------------------

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation. x is [C_in,H,W] or [B,C_in,H,W]; kernels are
/// [C_out,C_in,kh,kw]; bias [C_out] may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Conv2dOptions opt = {});

/// Multi-head scaled dot-product attention over `blocks` independent
/// sequences. q, k, v are [blocks*T, D]; heads split D evenly. Scores are
/// scaled by 1/sqrt(D/heads).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t blocks, std::size_t heads);

/// [B*n, d] token rows -> [B, d, g, g] channel-major maps (n = g*g).
Tensor tokens_to_maps(const Tensor& tokens, std::size_t blocks, std::size_t grid);

/// Mean over rows of -logits[i, target_i] + logsumexp_{j in mask_i} logits[i, j].
/// mask is row-major [n, m] with nonzero entries selecting the denominator.
Tensor masked_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                            std::span<const unsigned char> mask);

}  // namespace aio::inline AIO_ABI
