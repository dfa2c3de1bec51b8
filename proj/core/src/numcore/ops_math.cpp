#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "aio/numcore/ops.hpp"
#include "op_support.hpp"

namespace aio::inline AIO_ABI {

using namespace detail;

// --- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor y = Tensor::zeros({m, n});
  as_matrix(y.mutable_values(), m, n).noalias() = as_matrix(a.values(), m, k) * as_matrix(b.values(), k, n);
  if (auto* tape = track(y, {&a, &b})) {
    tape->record([a, b, y, m, k, n] {
      if (!y.has_grad()) return;
      auto gy = as_matrix(y.grad(), m, n);
      if (wants_grad(a)) as_matrix(a.grad_buffer(), m, k).noalias() += gy * as_matrix(b.values(), k, n).transpose();
      if (wants_grad(b)) as_matrix(b.grad_buffer(), k, n).noalias() += as_matrix(a.values(), m, k).transpose() * gy;
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0)) {
    throw DimensionError("linear shape mismatch: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  }
  const auto n = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != out)) {
    throw DimensionError("linear bias " + shape_str(bias.shape()) + " for output width " + std::to_string(out));
  }
  Tensor y = Tensor::zeros({n, out});
  auto ym = as_matrix(y.mutable_values(), n, out);
  ym.noalias() = as_matrix(x.values(), n, in) * as_matrix(w.values(), in, out);
  if (bias.defined()) ym.rowwise() += as_matrix(bias.values(), 1, out).row(0);
  if (auto* tape = track(y, {&x, &w, &bias})) {
    tape->record([x, w, bias, y, n, in, out] {
      if (!y.has_grad()) return;
      auto gy = as_matrix(y.grad(), n, out);
      if (wants_grad(x)) as_matrix(x.grad_buffer(), n, in).noalias() += gy * as_matrix(w.values(), in, out).transpose();
      if (wants_grad(w)) as_matrix(w.grad_buffer(), in, out).noalias() += as_matrix(x.values(), n, in).transpose() * gy;
      if (wants_grad(bias)) as_matrix(bias.grad_buffer(), 1, out) += gy.colwise().sum();
    });
  }
  return y;
}

// --- elementwise ------------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd bwd) {
  auto xv = x.values();
  std::vector<Real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Tensor y(x.shape(), std::move(out));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y, bwd] {
      if (!y.has_grad()) return;
      auto xv = x.values();
      auto yv = y.values();
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * bwd(xv[i], yv[i]);
    });
  }
  return y;
}

// bwd returns (d out / d a, d out / d b).
template <class Fwd, class Bwd>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  auto av = a.values();
  auto bv = b.values();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  Tensor y(a.shape(), std::move(out));
  if (auto* tape = track(y, {&a, &b})) {
    tape->record([a, b, y, bwd] {
      if (!y.has_grad()) return;
      auto av = a.values();
      auto bv = b.values();
      auto gy = y.grad();
      const bool ga = wants_grad(a), gb = wants_grad(b);
      std::span<Real> gav = ga ? a.grad_buffer() : std::span<Real>{};
      std::span<Real> gbv = gb ? b.grad_buffer() : std::span<Real>{};
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const auto [da, db] = bwd(av[i], bv[i]);
        if (ga) gav[i] += gy[i] * da;
        if (gb) gbv[i] += gy[i] * db;
      }
    });
  }
  return y;
}

struct Pair {
  Real first;
  Real second;
};

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](Real x, Real y) { return x + y; }, [](Real, Real) { return Pair{1, 1}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real, Real) { return Pair{1, -1}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real x, Real y) { return Pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](Real x, Real y) { return x / y; },
      [](Real x, Real y) { return Pair{Real(1) / y, -x / (y * y)}; });
}

// Ties route the gradient to the first argument.
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "minimum", [](Real x, Real y) { return x <= y ? x : y; },
      [](Real x, Real y) { return x <= y ? Pair{1, 0} : Pair{0, 1}; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "maximum", [](Real x, Real y) { return x >= y ? x : y; },
      [](Real x, Real y) { return x >= y ? Pair{1, 0} : Pair{0, 1}; });
}

Tensor scale(const Tensor& x, Real factor) {
  return unary(x, [factor](Real v) { return v * factor; }, [factor](Real, Real) { return factor; });
}

Tensor add_scalar(const Tensor& x, Real value) {
  return unary(x, [value](Real v) { return v + value; }, [](Real, Real) { return Real(1); });
}

Tensor neg(const Tensor& x) { return scale(x, Real(-1)); }

Tensor abs(const Tensor& x) {
  return unary(
      x, [](Real v) { return std::abs(v); },
      [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](Real v) { return v > 0 ? v : Real(0); }, [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

Tensor gelu(const Tensor& x) {
  constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
  constexpr Real inv_sqrt2pi = Real(0.39894228040143267794);
  return unary(
      x, [](Real v) { return Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2)); },
      [](Real v, Real) {
        return Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(Real(-0.5) * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](Real v) {
        if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

Tensor add_tiled(const Tensor& x, const Tensor& y) {
  require_2d(x, "add_tiled");
  require_2d(y, "add_tiled");
  const auto d = x.dim(1), k = y.dim(0);
  if (y.dim(1) != d || x.dim(0) % k) {
    throw DimensionError("add_tiled " + shape_str(x.shape()) + " + " + shape_str(y.shape()));
  }
  auto xv = x.values();
  auto yv = y.values();
  const auto period = k * d;
  std::vector<Real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + yv[i % period];
  Tensor z(x.shape(), std::move(out));
  if (auto* tape = track(z, {&x, &y})) {
    tape->record([x, y, z, period] {
      if (!z.has_grad()) return;
      auto gz = z.grad();
      accumulate_grad(x, gz);
      if (wants_grad(y)) {
        auto gy = y.grad_buffer();
        for (std::size_t i = 0; i < gz.size(); ++i) gy[i % period] += gz[i];
      }
    });
  }
  return z;
}

Tensor add_rowwise(const Tensor& x, const Tensor& v) {
  if (v.ndim() != 1) throw DimensionError("add_rowwise expects a 1-D vector, got " + shape_str(v.shape()));
  return add_tiled(x, reshape(v, {1, v.numel()}));
}

Tensor mul_blocks(const Tensor& x, const Tensor& gates) {
  require_2d(x, "mul_blocks");
  require_2d(gates, "mul_blocks");
  const auto blocks = gates.dim(0), d = x.dim(1);
  if (gates.dim(1) != d || x.dim(0) % blocks) {
    throw DimensionError("mul_blocks " + shape_str(x.shape()) + " by gates " + shape_str(gates.shape()));
  }
  const auto n = x.dim(0) / blocks;
  auto xv = x.values();
  auto gv = gates.values();
  std::vector<Real> out(xv.size());
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out[(b * n + i) * d + j] = xv[(b * n + i) * d + j] * gv[b * d + j];
  Tensor y(x.shape(), std::move(out));
  if (auto* tape = track(y, {&x, &gates})) {
    tape->record([x, gates, y, blocks, n, d] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto xv = x.values();
      auto gv = gates.values();
      if (wants_grad(x)) {
        auto gx = x.grad_buffer();
        for (std::size_t b = 0; b < blocks; ++b)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gx[(b * n + i) * d + j] += gy[(b * n + i) * d + j] * gv[b * d + j];
      }
      if (wants_grad(gates)) {
        auto gg = gates.grad_buffer();
        for (std::size_t b = 0; b < blocks; ++b)
          for (std::size_t j = 0; j < d; ++j) {
            double acc = 0;
            for (std::size_t i = 0; i < n; ++i) acc += double(gy[(b * n + i) * d + j]) * xv[(b * n + i) * d + j];
            gg[b * d + j] += Real(acc);
          }
      }
    });
  }
  return y;
}

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (auto v : x.values()) acc += v;
  Tensor y = Tensor::scalar(Real(acc));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y] {
      if (!y.has_grad()) return;
      const Real g = y.grad()[0];
      for (auto& v : x.grad_buffer()) v += g;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) { return scale(sum(x), Real(1.0 / double(x.numel()))); }

Tensor block_weighted_sum(const Tensor& x, std::span<const Real> weights, std::size_t blocks) {
  require_2d(x, "block_weighted_sum");
  if (weights.size() != x.dim(0) || blocks == 0 || x.dim(0) % blocks) {
    throw DimensionError("block_weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                         shape_str(x.shape()) + " in " + std::to_string(blocks) + " blocks");
  }
  const auto n = x.dim(0) / blocks, d = x.dim(1);
  auto xv = x.values();
  std::vector<Real> out(blocks * d);
  std::vector<double> acc(d);
  for (std::size_t b = 0; b < blocks; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights[b * n + i];
      if (w == 0) continue;
      for (std::size_t j = 0; j < d; ++j) acc[j] += w * xv[(b * n + i) * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] = Real(acc[j]);
  }
  Tensor y({blocks, d}, std::move(out));
  if (auto* tape = track(y, {&x})) {
    std::vector<Real> w(weights.begin(), weights.end());
    tape->record([x, y, w = std::move(w), blocks, n, d] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gx[(b * n + i) * d + j] += w[b * n + i] * gy[b * d + j];
    });
  }
  return y;
}

// --- normalisation ----------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  const int last = static_cast<int>(x.ndim()) - 1;
  if (axis != -1 && axis != last) throw DimensionError("softmax supports only the last axis");
  const auto n = x.shape().back(), rows = x.numel() / n;
  auto xv = x.values();
  std::vector<Real> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv.data() + r * n;
    Real* o = out.data() + r * n;
    const Real mx = *std::max_element(in, in + n);
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(double(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] = Real(std::exp(double(in[j] - mx)) / z);
  }
  Tensor y(x.shape(), std::move(out));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y, n, rows] {
      if (!y.has_grad()) return;
      auto yv = y.values();
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += double(gy[r * n + j]) * yv[r * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += yv[r * n + j] * Real(gy[r * n + j] - dot);
      }
    });
  }
  return y;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  const auto d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layernorm gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " for width " + std::to_string(d));
  }
  if (!(eps > 0)) throw ContractError("layernorm eps must be positive");
  const auto rows = x.numel() / d;
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<Real> xhat(xv.size());
  std::vector<Real> inv_std(rows);
  std::vector<Real> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv.data() + r * d;
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= double(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= double(d);
    const double is = 1.0 / std::sqrt(var + double(eps));
    inv_std[r] = Real(is);
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = Real((in[j] - mu) * is);
      xhat[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  Tensor y(x.shape(), std::move(out));
  if (auto* tape = track(y, {&x, &gain, &bias})) {
    tape->record([x, gain, bias, y, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gv = gain.values();
      if (wants_grad(gain) || wants_grad(bias)) {
        std::vector<double> dg(d, 0.0), db(d, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) {
            dg[j] += double(gy[r * d + j]) * xhat[r * d + j];
            db[j] += gy[r * d + j];
          }
        if (wants_grad(gain)) {
          auto g = gain.grad_buffer();
          for (std::size_t j = 0; j < d; ++j) g[j] += Real(dg[j]);
        }
        if (wants_grad(bias)) {
          auto g = bias.grad_buffer();
          for (std::size_t j = 0; j < d; ++j) g[j] += Real(db[j]);
        }
      }
      if (wants_grad(x)) {
        auto gx = x.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          double m1 = 0, m2 = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = double(gy[r * d + j]) * gv[j];
            m1 += dh;
            m2 += dh * xhat[r * d + j];
          }
          m1 /= double(d);
          m2 /= double(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = double(gy[r * d + j]) * gv[j];
            gx[r * d + j] += Real(inv_std[r] * (dh - m1 - xhat[r * d + j] * m2));
          }
        }
      }
    });
  }
  return y;
}

Tensor l2_normalize_rows(const Tensor& x, Real eps) {
  require_2d(x, "l2_normalize_rows");
  const auto rows = x.dim(0), d = x.dim(1);
  auto xv = x.values();
  std::vector<Real> norms(rows);
  std::vector<Real> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += double(xv[r * d + j]) * xv[r * d + j];
    const double nrm = std::max(std::sqrt(s), double(eps));
    norms[r] = Real(nrm);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = Real(xv[r * d + j] / nrm);
  }
  Tensor y(x.shape(), std::move(out));
  if (auto* tape = track(y, {&x})) {
    tape->record([x, y, norms = std::move(norms), rows, d, eps] {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto yv = y.values();
      auto gx = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        if (norms[r] <= eps) {
          // Guarded branch: y = x / eps is linear in x.
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += gy[r * d + j] / eps;
          continue;
        }
        double dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += double(gy[r * d + j]) * yv[r * d + j];
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += Real((gy[r * d + j] - yv[r * d + j] * dot) / norms[r]);
      }
    });
  }
  return y;
}

Tensor masked_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                            std::span<const unsigned char> mask) {
  require_2d(logits, "masked_cross_entropy");
  const auto n = logits.dim(0), m = logits.dim(1);
  if (targets.size() != n || mask.size() != n * m) {
    throw DimensionError("masked_cross_entropy: targets/mask do not match logits " + shape_str(logits.shape()));
  }
  auto lv = logits.values();
  std::vector<Real> probs(n * m, Real(0));
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= m) throw ContractError("masked_cross_entropy target out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) mx = std::max(mx, double(lv[i * m + j]));
    if (!std::isfinite(mx)) throw ContractError("masked_cross_entropy: row " + std::to_string(i) + " has an empty mask");
    double z = 0;
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) z += std::exp(double(lv[i * m + j]) - mx);
    const double lse = mx + std::log(z);
    total += lse - double(lv[i * m + targets[i]]);
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) probs[i * m + j] = Real(std::exp(double(lv[i * m + j]) - lse));
  }
  Tensor y = Tensor::scalar(Real(total / double(n)));
  if (auto* tape = track(y, {&logits})) {
    std::vector<std::size_t> tv(targets.begin(), targets.end());
    tape->record([logits, y, probs = std::move(probs), tv = std::move(tv), n, m] {
      if (!y.has_grad()) return;
      const Real g = y.grad()[0] / Real(n);
      auto gl = logits.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) gl[i * m + j] += g * probs[i * m + j];
        gl[i * m + tv[i]] -= g;
      }
    });
  }
  return y;
}

}  // namespace aio::inline AIO_ABI
