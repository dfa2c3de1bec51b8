#include "aio/align/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "aio/numcore/ops.hpp"

namespace aio::inline AIO_ABI {

void ContrastConfig::validate() const {
  if (!(tau > 0)) throw ConfigError("temperature must be positive, got " + std::to_string(tau));
}

AlignProjections AlignProjections::create(ParamStore& s, std::size_t dim, std::size_t out_dim, Rng& rng) {
  AlignProjections p;
  p.search_w = s.add("align.search.weight", trunc_normal({dim, out_dim}, 0.02, rng));
  p.search_b = s.add("align.search.bias", Tensor::zeros({out_dim}));
  p.template_w = s.add("align.template.weight", trunc_normal({dim, out_dim}, 0.02, rng));
  p.template_b = s.add("align.template.bias", Tensor::zeros({out_dim}));
  p.language_w = s.add("align.language.weight", trunc_normal({dim, out_dim}, 0.02, rng));
  p.language_b = s.add("align.language.bias", Tensor::zeros({out_dim}));
  return p;
}

Tensor project_pool(const Tensor& tokens, const Tensor& w, const Tensor& b, std::size_t blocks) {
  if (tokens.ndim() != 2 || blocks == 0 || tokens.dim(0) % blocks) {
    throw DimensionError("project_pool: " + shape_str(tokens.shape()) + " in " + std::to_string(blocks) + " blocks");
  }
  const auto n = tokens.dim(0) / blocks;
  const std::vector<Real> weights(tokens.dim(0), Real(1.0 / double(n)));
  return linear(block_weighted_sum(tokens, weights, blocks), w, b);
}

double cosine(std::span<const Real> u, std::span<const Real> v) {
  if (u.size() != v.size()) throw DimensionError("cosine of vectors with different lengths");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += double(u[i]) * v[i];
    nu += double(u[i]) * u[i];
    nv += double(v[i]) * v[i];
  }
  return dot / (std::max(std::sqrt(nu), 1e-8) * std::max(std::sqrt(nv), 1e-8));
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  return matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b)));
}

namespace {

void require_batch(const Tensor& f, std::size_t n, const char* what) {
  if (f.ndim() != 2 || f.dim(0) != n) throw DimensionError(std::string(what) + " embeddings " + shape_str(f.shape()));
}

std::vector<std::size_t> diagonal_targets(std::size_t n) {
  std::vector<std::size_t> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = i;
  return t;
}

// [N, N] logits whose row i has positive i and negatives j != i.
Tensor directional(const Tensor& logits, DenominatorMode mode) {
  const auto n = logits.dim(0);
  std::vector<unsigned char> mask(n * n, 1);
  if (mode == DenominatorMode::literal)
    for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 0;
  return masked_cross_entropy(logits, diagonal_targets(n), mask);
}

// Logits [N, 2N] = [cross | self]: positive is cross column i, negatives are
// cross columns j != i and self columns j != i.
Tensor intra_directional(const Tensor& cross, const Tensor& self, DenominatorMode mode) {
  const auto n = cross.dim(0);
  std::vector<unsigned char> mask(n * 2 * n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i * 2 * n + n + i] = 0;
    if (mode == DenominatorMode::literal) mask[i * 2 * n + i] = 0;
  }
  return masked_cross_entropy(concat_cols({cross, self}), diagonal_targets(n), mask);
}

}  // namespace

Tensor cma_loss(const Tensor& fx, const Tensor& fz, const Tensor& ft, const ContrastConfig& cfg) {
  cfg.validate();
  const auto n = fx.ndim() == 2 ? fx.dim(0) : 0;
  if (n < 2) throw ContractError("cma_loss needs a batch of at least 2 samples for negatives");
  require_batch(fz, n, "template");
  require_batch(ft, n, "language");
  const Real inv_tau = Real(1.0 / cfg.tau);
  const Tensor xt = scale(cosine_matrix(fx, ft), inv_tau);
  const Tensor zt = scale(cosine_matrix(fz, ft), inv_tau);
  const Tensor x2t = directional(xt, cfg.mode);
  const Tensor z2t = directional(zt, cfg.mode);
  const Tensor t2x = directional(transpose(xt), cfg.mode);
  const Tensor t2z = directional(transpose(zt), cfg.mode);
  return add(scale(add(x2t, z2t), Real(0.5)), scale(add(t2z, t2x), Real(0.5)));
}

Tensor ima_loss(const Tensor& fx, const Tensor& fz, const ContrastConfig& cfg) {
  cfg.validate();
  const auto n = fx.ndim() == 2 ? fx.dim(0) : 0;
  if (n < 2) throw ContractError("ima_loss needs a batch of at least 2 samples for negatives");
  require_batch(fz, n, "template");
  const Real inv_tau = Real(1.0 / cfg.tau);
  const Tensor xz = scale(cosine_matrix(fx, fz), inv_tau);
  const Tensor xx = scale(cosine_matrix(fx, fx), inv_tau);
  const Tensor zz = scale(cosine_matrix(fz, fz), inv_tau);
  const Tensor x2z = intra_directional(xz, xx, cfg.mode);
  const Tensor z2x = intra_directional(transpose(xz), zz, cfg.mode);
  return scale(add(x2z, z2x), Real(0.5));
}

}  // namespace aio::inline AIO_ABI
