#pragma once

#include <cstddef>
#include <span>

#include "aio/numcore/params.hpp"
#include "aio/numcore/tensor.hpp"

namespace aio::inline AIO_ABI {

/// Whether the positive pair is part of the InfoNCE denominator (`standard`)
/// or the denominator sums over negatives only (`literal`; unbounded below).
enum class DenominatorMode { standard, literal };

struct ContrastConfig {
  double tau = 0.5;
  DenominatorMode mode = DenominatorMode::standard;
  void validate() const;
};

/// Three independent D -> C maps for search, template and language.
struct AlignProjections {
  Tensor search_w, search_b;
  Tensor template_w, template_b;
  Tensor language_w, language_b;

  static AlignProjections create(ParamStore& store, std::size_t dim, std::size_t out_dim, Rng& rng);
};

/// Mean over the rows of each of `blocks` token blocks [B*N, D], then
/// `tokens_mean * w + b` -> [B, C].
Tensor project_pool(const Tensor& tokens, const Tensor& w, const Tensor& b, std::size_t blocks = 1);

/// Cosine similarity with norms floored at 1e-8.
double cosine(std::span<const Real> u, std::span<const Real> v);
/// Pairwise cosine similarities of the rows of a [N,C] and b [M,C] -> [N,M].
Tensor cosine_matrix(const Tensor& a, const Tensor& b);

/// Cross-modal alignment over a batch of N >= 2 embeddings [N,C]:
/// 1/2 (x2t + z2t) + 1/2 (t2z + t2x), each term a batch-mean InfoNCE whose
/// negatives are the other N-1 samples of the opposing modality.
Tensor cma_loss(const Tensor& fx, const Tensor& fz, const Tensor& ft, const ContrastConfig& cfg);

/// Intra-modal alignment: 1/2 (x2z + z2x) with the 2(N-1) negatives drawn
/// from both vision streams of the other samples.
Tensor ima_loss(const Tensor& fx, const Tensor& fz, const ContrastConfig& cfg);

}  // namespace aio::inline AIO_ABI
