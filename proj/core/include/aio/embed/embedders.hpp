#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aio/embed/tokenizer.hpp"
#include "aio/numcore/tensor.hpp"

namespace aio::inline AIO_ABI {

/// Patch geometry of the template and search crops.
struct PatchConfig {
  std::size_t patch = 8;
  std::size_t search_size = 64;    // square search crop side
  std::size_t template_size = 32;  // square template crop side
  std::size_t dim = 96;

  std::size_t search_tokens() const { return (search_size / patch) * (search_size / patch); }
  std::size_t template_tokens() const { return (template_size / patch) * (template_size / patch); }
  std::size_t search_grid() const { return search_size / patch; }
  std::size_t patch_width() const { return 3 * patch * patch; }
  /// Throws ConfigError unless the patch size divides both crop sides.
  void validate() const;
};

enum class LanguageReduction { cls, mean };

/// Rows of `table` selected by the prompt ids -> [N_t, D].
Tensor embed_text(const TokenizedPrompt& tp, const Tensor& table);
/// Batched lookup of several prompts -> [B*N_t, D].
Tensor embed_text(std::span<const TokenizedPrompt> prompts, const Tensor& table);

/// Images [B,3,H,W] (or [3,H,W]) -> non-overlapping P x P patches in raster
/// order, each flattened channel-major -> [B*N, 3*P*P]. Not differentiable.
Tensor patchify(const Tensor& images, std::size_t patch);

/// Linear patch projection plus positional embedding. `images` is [3,H,W]
/// or [B,3,H,W]; returns [B*N, D]. `bias` may be undefined.
Tensor patch_embed(const Tensor& images, std::size_t patch, const Tensor& proj, const Tensor& bias, const Tensor& pos);

/// Per-token weights realising a language reduction for one prompt mask.
/// Mean mode averages the masked-in rows, optionally skipping the [CLS] row.
std::vector<Real> reduction_weights(std::span<const unsigned char> mask, LanguageReduction mode,
                                    bool mean_includes_cls = true);

/// [N_t, D] -> [D].
Tensor reduce_language(const Tensor& tokens, std::span<const unsigned char> mask, LanguageReduction mode,
                       bool mean_includes_cls = true);
/// [B*N_t, D] -> [B, D].
Tensor reduce_language(const Tensor& tokens, std::span<const TokenizedPrompt> prompts, LanguageReduction mode,
                       bool mean_includes_cls = true);

}  // namespace aio::inline AIO_ABI
