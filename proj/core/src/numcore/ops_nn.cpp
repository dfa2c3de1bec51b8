#include <cmath>
#include <memory>
#include <string>

#include "aio/numcore/ops.hpp"
#include "op_support.hpp"

namespace aio::inline AIO_ABI {

using namespace detail;

namespace {

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, kh, kw, h_out, w_out, stride, pad;
  std::size_t patch() const { return c_in * kh * kw; }
  std::size_t cells() const { return h_out * w_out; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernels, const Conv2dOptions& opt) {
  if (x.ndim() != 3 && x.ndim() != 4) throw DimensionError("conv2d input must be [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
  if (kernels.ndim() != 4) throw DimensionError("conv2d kernels must be [C_out,C_in,kh,kw], got " + shape_str(kernels.shape()));
  const std::size_t off = x.ndim() == 4 ? 1 : 0;
  ConvGeometry g{};
  g.batch = off ? x.dim(0) : 1;
  g.c_in = x.dim(off);
  g.h = x.dim(off + 1);
  g.w = x.dim(off + 2);
  g.c_out = kernels.dim(0);
  g.kh = kernels.dim(2);
  g.kw = kernels.dim(3);
  g.stride = opt.stride;
  g.pad = opt.padding;
  if (kernels.dim(1) != g.c_in) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) + " kernels " + shape_str(kernels.shape()));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) throw ConfigError("conv2d kernel sides must be odd, got " + shape_str(kernels.shape()));
  if (g.stride == 0) throw ConfigError("conv2d stride must be positive");
  const auto span_h = g.h + 2 * g.pad, span_w = g.w + 2 * g.pad;
  if (span_h < g.kh || span_w < g.kw || (span_h - g.kh) % g.stride || (span_w - g.kw) % g.stride) {
    throw ConfigError("conv2d output size is not integral for input " + shape_str(x.shape()) + ", kernel " +
                      shape_str(kernels.shape()) + ", stride " + std::to_string(g.stride) + ", padding " +
                      std::to_string(g.pad));
  }
  g.h_out = (span_h - g.kh) / g.stride + 1;
  g.w_out = (span_w - g.kw) / g.stride + 1;
  return g;
}

// cols is [patch, batch*cells], column b*cells + cell.
void im2col(const ConvGeometry& g, std::span<const Real> x, std::vector<Real>& cols) {
  const auto ncol = g.batch * g.cells();
  cols.assign(g.patch() * ncol, Real(0));
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t c = 0; c < g.c_in; ++c)
      for (std::size_t ky = 0; ky < g.kh; ++ky)
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const auto row = (c * g.kh + ky) * g.kw + kx;
          Real* dst = cols.data() + row * ncol + b * g.cells();
          const Real* src = x.data() + (b * g.c_in + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.h_out; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.w_out; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              dst[oy * g.w_out + ox] = src[iy * g.w + ix];
            }
          }
        }
}

void col2im(const ConvGeometry& g, const std::vector<Real>& cols, std::span<Real> dx) {
  const auto ncol = g.batch * g.cells();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t c = 0; c < g.c_in; ++c)
      for (std::size_t ky = 0; ky < g.kh; ++ky)
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const auto row = (c * g.kh + ky) * g.kw + kx;
          const Real* src = cols.data() + row * ncol + b * g.cells();
          Real* dst = dx.data() + (b * g.c_in + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.h_out; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.w_out; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              dst[iy * g.w + ix] += src[oy * g.w_out + ox];
            }
          }
        }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Conv2dOptions opt) {
  const auto g = conv_geometry(x, kernels, opt);
  if (bias.defined() && bias.numel() != g.c_out) {
    throw DimensionError("conv2d bias " + shape_str(bias.shape()) + " for " + std::to_string(g.c_out) + " outputs");
  }
  auto cols = std::make_shared<std::vector<Real>>();
  im2col(g, x.values(), *cols);
  const auto ncol = g.batch * g.cells();
  RowMat out_mat(g.c_out, ncol);
  out_mat.noalias() = as_matrix(kernels.values(), g.c_out, g.patch()) * as_matrix(std::span<const Real>(*cols), g.patch(), ncol);

  Shape shape = x.ndim() == 4 ? Shape{g.batch, g.c_out, g.h_out, g.w_out} : Shape{g.c_out, g.h_out, g.w_out};
  std::vector<Real> out(g.batch * g.c_out * g.cells());
  auto bv = bias.defined() ? bias.values() : std::span<const Real>{};
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const Real add = bias.defined() ? bv[co] : Real(0);
      for (std::size_t p = 0; p < g.cells(); ++p) out[(b * g.c_out + co) * g.cells() + p] = out_mat(co, b * g.cells() + p) + add;
    }
  Tensor y(std::move(shape), std::move(out));

  if (auto* tape = track(y, {&x, &kernels, &bias})) {
    tape->record([x, kernels, bias, y, g, cols, ncol] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      RowMat dout(g.c_out, ncol);
      for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.c_out; ++co)
          for (std::size_t p = 0; p < g.cells(); ++p) dout(co, b * g.cells() + p) = gy[(b * g.c_out + co) * g.cells() + p];
      if (wants_grad(bias)) {
        auto gb = bias.grad_buffer();
        for (std::size_t co = 0; co < g.c_out; ++co) {
          double acc = 0;
          for (std::size_t j = 0; j < ncol; ++j) acc += dout(co, j);
          gb[co] += Real(acc);
        }
      }
      if (wants_grad(kernels)) {
        as_matrix(kernels.grad_buffer(), g.c_out, g.patch()).noalias() +=
            dout * as_matrix(std::span<const Real>(*cols), g.patch(), ncol).transpose();
      }
      if (wants_grad(x)) {
        std::vector<Real> dcols(g.patch() * ncol);
        as_matrix(std::span<Real>(dcols), g.patch(), ncol).noalias() =
            as_matrix(kernels.values(), g.c_out, g.patch()).transpose() * dout;
        col2im(g, dcols, x.grad_buffer());
      }
    });
  }
  return y;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t blocks, std::size_t heads) {
  require_2d(q, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const auto rows = q.dim(0), d = q.dim(1);
  if (blocks == 0 || rows % blocks || heads == 0 || d % heads) {
    throw DimensionError("attention: " + shape_str(q.shape()) + " cannot split into " + std::to_string(blocks) +
                         " blocks and " + std::to_string(heads) + " heads");
  }
  const auto t = rows / blocks, dh = d / heads;
  const Real sc = Real(1.0 / std::sqrt(double(dh)));
  const auto stride = Eigen::OuterStride<>(static_cast<Eigen::Index>(d));
  const auto T = static_cast<Eigen::Index>(t), DH = static_cast<Eigen::Index>(dh);

  auto probs = std::make_shared<std::vector<Real>>(blocks * heads * t * t);
  Tensor y = Tensor::zeros({rows, d});
  auto yv = y.mutable_values();
  RowMat s(t, t);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      const auto off = b * t * d + h * dh;
      ConstStridedMap qm(q.values().data() + off, T, DH, stride);
      ConstStridedMap km(k.values().data() + off, T, DH, stride);
      ConstStridedMap vm(v.values().data() + off, T, DH, stride);
      s.noalias() = (qm * km.transpose()) * sc;
      MatMap p(probs->data() + (b * heads + h) * t * t, T, T);
      for (Eigen::Index i = 0; i < T; ++i) {
        const Real mx = s.row(i).maxCoeff();
        double z = 0;
        for (Eigen::Index j = 0; j < T; ++j) z += std::exp(double(s(i, j) - mx));
        for (Eigen::Index j = 0; j < T; ++j) p(i, j) = Real(std::exp(double(s(i, j) - mx)) / z);
      }
      StridedMap om(yv.data() + off, T, DH, stride);
      om.noalias() = p * vm;
    }

  if (auto* tape = track(y, {&q, &k, &v})) {
    tape->record([q, k, v, y, probs, blocks, heads, t, d, dh, sc, stride, T, DH] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      std::span<Real> gq = wants_grad(q) ? q.grad_buffer() : std::span<Real>{};
      std::span<Real> gk = wants_grad(k) ? k.grad_buffer() : std::span<Real>{};
      std::span<Real> gv = wants_grad(v) ? v.grad_buffer() : std::span<Real>{};
      RowMat dp(t, t), ds(t, t);
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t h = 0; h < heads; ++h) {
          const auto off = b * t * d + h * dh;
          ConstStridedMap qm(q.values().data() + off, T, DH, stride);
          ConstStridedMap km(k.values().data() + off, T, DH, stride);
          ConstStridedMap vm(v.values().data() + off, T, DH, stride);
          ConstStridedMap dom(gy.data() + off, T, DH, stride);
          ConstMatMap p(probs->data() + (b * heads + h) * t * t, T, T);
          if (!gv.empty()) StridedMap(gv.data() + off, T, DH, stride).noalias() += p.transpose() * dom;
          dp.noalias() = dom * vm.transpose();
          for (Eigen::Index i = 0; i < T; ++i) {
            double dot = 0;
            for (Eigen::Index j = 0; j < T; ++j) dot += double(dp(i, j)) * p(i, j);
            for (Eigen::Index j = 0; j < T; ++j) ds(i, j) = p(i, j) * Real(dp(i, j) - dot) * sc;
          }
          if (!gq.empty()) StridedMap(gq.data() + off, T, DH, stride).noalias() += ds * km;
          if (!gk.empty()) StridedMap(gk.data() + off, T, DH, stride).noalias() += ds.transpose() * qm;
        }
    });
  }
  return y;
}

}  // namespace aio::inline AIO_ABI
