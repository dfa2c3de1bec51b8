#include <algorithm>
#include <string>

#include "aio/numcore/ops.hpp"
#include "op_support.hpp"

namespace aio::inline AIO_ABI {

namespace detail {

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

using namespace detail;

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor y(std::move(shape), std::vector<Real>(x.values().begin(), x.values().end()));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y] {
      if (y.has_grad()) accumulate_grad(x, y.grad());
    });
  }
  return y;
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  const auto r = x.dim(0), c = x.dim(1);
  std::vector<Real> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  Tensor y({c, r}, std::move(out));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y, r, c] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_rows");
  const auto cols = x.dim(1);
  if (count == 0 || begin + count > x.dim(0)) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  auto xv = x.values();
  std::vector<Real> out(xv.begin() + begin * cols, xv.begin() + (begin + count) * cols);
  Tensor y({count, cols}, std::move(out));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y, begin, cols] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[begin * cols + i] += gy[i];
    });
  }
  return y;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_cols");
  const auto rows = x.dim(0), cols = x.dim(1);
  if (count == 0 || begin + count > cols) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  auto xv = x.values();
  std::vector<Real> out(rows * count);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(xv.begin() + i * cols + begin, count, out.begin() + i * count);
  Tensor y({rows, count}, std::move(out));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y, rows, cols, begin, count] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < count; ++j) gx[i * cols + begin + j] += gy[i * count + j];
    });
  }
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
  const auto cols = parts.front().ndim() == 2 ? parts.front().dim(1) : 0;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.dim(1) != cols) throw DimensionError("concat_rows column mismatch " + shape_str(p.shape()));
    rows += p.dim(0);
  }
  std::vector<Real> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor y({rows, cols}, std::move(out));
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    if (auto* t = track(y, {&p})) tape = t;
  }
  if (tape) {
    tape->record([parts, y] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      std::size_t off = 0;
      for (const auto& p : parts) {
        accumulate_grad(p, gy.subspan(off, p.numel()));
        off += p.numel();
      }
    });
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero tensors");
  const auto rows = parts.front().ndim() == 2 ? parts.front().dim(0) : 0;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.dim(0) != rows) throw DimensionError("concat_cols row mismatch " + shape_str(p.shape()));
    cols += p.dim(1);
  }
  std::vector<Real> out(rows * cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto pc = p.dim(1);
    auto pv = p.values();
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(pv.begin() + i * pc, pc, out.begin() + i * cols + off);
    off += pc;
  }
  Tensor y({rows, cols}, std::move(out));
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    if (auto* t = track(y, {&p})) tape = t;
  }
  if (tape) {
    tape->record([parts, y, rows, cols] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      std::size_t off = 0;
      for (const auto& p : parts) {
        const auto pc = p.dim(1);
        if (wants_grad(p)) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += gy[i * cols + off + j];
        }
        off += pc;
      }
    });
  }
  return y;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows of zero tensors");
  std::vector<Tensor> as2d;
  as2d.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.ndim() != 1) throw DimensionError("stack_rows expects 1-D rows, got " + shape_str(r.shape()));
    as2d.push_back(reshape(r, {1, r.numel()}));
  }
  return concat_rows(as2d);
}

Tensor concat_blocks(const Tensor& x, const Tensor& y, std::size_t blocks) {
  require_2d(x, "concat_blocks");
  require_2d(y, "concat_blocks");
  const auto d = x.dim(1);
  if (y.dim(1) != d || blocks == 0 || x.dim(0) % blocks || y.dim(0) % blocks) {
    throw DimensionError("concat_blocks " + shape_str(x.shape()) + " and " + shape_str(y.shape()) + " over " +
                         std::to_string(blocks) + " blocks");
  }
  const auto na = x.dim(0) / blocks, nb = y.dim(0) / blocks, n = na + nb;
  std::vector<Real> out(blocks * n * d);
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t b = 0; b < blocks; ++b) {
    std::copy_n(xv.begin() + b * na * d, na * d, out.begin() + b * n * d);
    std::copy_n(yv.begin() + b * nb * d, nb * d, out.begin() + (b * n + na) * d);
  }
  Tensor z({blocks * n, d}, std::move(out));
  if (auto* tape = track(z, {&x, &y})) {
    tape->record([x, y, z, blocks, na, nb, n, d] {
      if (!z.has_grad()) return;
      auto gz = z.grad();
      for (std::size_t b = 0; b < blocks; ++b) {
        if (wants_grad(x)) {
          auto gx = x.grad_buffer();
          for (std::size_t i = 0; i < na * d; ++i) gx[b * na * d + i] += gz[b * n * d + i];
        }
        if (wants_grad(y)) {
          auto gy = y.grad_buffer();
          for (std::size_t i = 0; i < nb * d; ++i) gy[b * nb * d + i] += gz[(b * n + na) * d + i];
        }
      }
    });
  }
  return z;
}

Tensor slice_blocks(const Tensor& x, std::size_t blocks, std::size_t offset, std::size_t count) {
  require_2d(x, "slice_blocks");
  if (blocks == 0 || x.dim(0) % blocks || count == 0 || offset + count > x.dim(0) / blocks) {
    throw DimensionError("slice_blocks out of range for " + shape_str(x.shape()));
  }
  const auto d = x.dim(1), n = x.dim(0) / blocks;
  std::vector<Real> out(blocks * count * d);
  auto xv = x.values();
  for (std::size_t b = 0; b < blocks; ++b)
    std::copy_n(xv.begin() + (b * n + offset) * d, count * d, out.begin() + b * count * d);
  Tensor y({blocks * count, d}, std::move(out));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y, blocks, offset, count, n, d] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < count * d; ++i) gx[(b * n + offset) * d + i] += gy[b * count * d + i];
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_2d(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows with no ids");
  const auto rows = table.dim(0), d = table.dim(1);
  std::vector<Real> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw ContractError("gather_rows index " + std::to_string(ids[i]) + " out of range for " +
                          shape_str(table.shape()));
    }
    std::copy_n(tv.begin() + ids[i] * d, d, out.begin() + i * d);
  }
  Tensor y({ids.size(), d}, std::move(out));
  if (auto* tape = track(y, {&table})) {
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    tape->record([table, y, idv = std::move(idv), d] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gt = table.grad_buffer();
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[idv[i] * d + j] += gy[i * d + j];
    });
  }
  return y;
}

Tensor tokens_to_maps(const Tensor& tokens, std::size_t blocks, std::size_t grid) {
  require_2d(tokens, "tokens_to_maps");
  const auto n = grid * grid, d = tokens.dim(1);
  if (blocks == 0 || tokens.dim(0) != blocks * n) {
    throw DimensionError("tokens_to_maps: " + shape_str(tokens.shape()) + " is not " + std::to_string(blocks) +
                         " blocks of " + std::to_string(grid) + "x" + std::to_string(grid) + " tokens");
  }
  std::vector<Real> out(tokens.numel());
  auto tv = tokens.values();
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t c = 0; c < d; ++c) out[(b * d + c) * n + p] = tv[(b * n + p) * d + c];
  Tensor y({blocks, d, grid, grid}, std::move(out));
  if (auto* tape = track(y, {&tokens})) {
    tape->record([tokens, y, blocks, n, d] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gt = tokens.grad_buffer();
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t p = 0; p < n; ++p)
          for (std::size_t c = 0; c < d; ++c) gt[(b * n + p) * d + c] += gy[(b * d + c) * n + p];
    });
  }
  return y;
}

}  // namespace aio::inline AIO_ABI
