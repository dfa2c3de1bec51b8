#include "aio/embed/embedders.hpp"

#include <string>

#include "aio/numcore/ops.hpp"

namespace aio::inline AIO_ABI {

void PatchConfig::validate() const {
  if (patch == 0 || dim == 0) throw ConfigError("patch size and embedding dim must be positive");
  if (search_size == 0 || template_size == 0 || search_size % patch || template_size % patch) {
    throw ConfigError("patch size " + std::to_string(patch) + " must divide search size " +
                      std::to_string(search_size) + " and template size " + std::to_string(template_size));
  }
}

Tensor embed_text(const TokenizedPrompt& tp, const Tensor& table) {
  return embed_text(std::span<const TokenizedPrompt>(&tp, 1), table);
}

Tensor embed_text(std::span<const TokenizedPrompt> prompts, const Tensor& table) {
  if (table.ndim() != 2) throw DimensionError("embedding table must be [V,D], got " + shape_str(table.shape()));
  std::vector<std::size_t> ids;
  for (const auto& tp : prompts) {
    for (auto id : tp.ids) {
      if (id >= table.dim(0)) {
        throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(table.dim(0)));
      }
      ids.push_back(id);
    }
  }
  return gather_rows(table, ids);
}

Tensor patchify(const Tensor& images, std::size_t patch) {
  if (images.ndim() != 3 && images.ndim() != 4) {
    throw DimensionError("patchify expects [3,H,W] or [B,3,H,W], got " + shape_str(images.shape()));
  }
  const std::size_t off = images.ndim() == 4 ? 1 : 0;
  const std::size_t batch = off ? images.dim(0) : 1;
  const std::size_t c = images.dim(off), h = images.dim(off + 1), w = images.dim(off + 2);
  if (patch == 0 || h % patch || w % patch) {
    throw ConfigError("image " + shape_str(images.shape()) + " is not divisible into " + std::to_string(patch) +
                      "x" + std::to_string(patch) + " patches");
  }
  const std::size_t gh = h / patch, gw = w / patch, width = c * patch * patch;
  std::vector<Real> out(batch * gh * gw * width);
  auto src = images.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px) {
        Real* dst = out.data() + ((b * gh + py) * gw + px) * width;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < patch; ++y)
            for (std::size_t x = 0; x < patch; ++x)
              *dst++ = src[((b * c + ch) * h + py * patch + y) * w + px * patch + x];
      }
  return Tensor({batch * gh * gw, width}, std::move(out));
}

Tensor patch_embed(const Tensor& images, std::size_t patch, const Tensor& proj, const Tensor& bias, const Tensor& pos) {
  const Tensor patches = patchify(images, patch);
  if (proj.ndim() != 2 || proj.dim(0) != patches.dim(1)) {
    throw DimensionError("patch projection " + shape_str(proj.shape()) + " does not accept patches of width " +
                         std::to_string(patches.dim(1)));
  }
  if (pos.ndim() != 2 || pos.dim(1) != proj.dim(1) || patches.dim(0) % pos.dim(0)) {
    throw DimensionError("positional table " + shape_str(pos.shape()) + " does not match " +
                         std::to_string(patches.dim(0)) + " tokens");
  }
  return add_tiled(linear(patches, proj, bias), pos);
}

std::vector<Real> reduction_weights(std::span<const unsigned char> mask, LanguageReduction mode, bool mean_includes_cls) {
  std::vector<Real> w(mask.size(), Real(0));
  if (mode == LanguageReduction::cls) {
    if (mask.empty() || !mask[0]) throw ContractError("language reduction needs a set [CLS] mask bit");
    w[0] = 1;
    return w;
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && (mean_includes_cls || i > 0)) ++count;
  if (count == 0) throw ContractError("language reduction over an all-zero mask");
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && (mean_includes_cls || i > 0)) w[i] = Real(1.0 / double(count));
  return w;
}

Tensor reduce_language(const Tensor& tokens, std::span<const unsigned char> mask, LanguageReduction mode,
                       bool mean_includes_cls) {
  if (tokens.ndim() != 2 || tokens.dim(0) != mask.size()) {
    throw DimensionError("reduce_language: " + shape_str(tokens.shape()) + " with mask of length " +
                         std::to_string(mask.size()));
  }
  const auto w = reduction_weights(mask, mode, mean_includes_cls);
  return reshape(block_weighted_sum(tokens, w, 1), {tokens.dim(1)});
}

Tensor reduce_language(const Tensor& tokens, std::span<const TokenizedPrompt> prompts, LanguageReduction mode,
                       bool mean_includes_cls) {
  std::vector<Real> w;
  for (const auto& tp : prompts) {
    const auto part = reduction_weights(tp.mask, mode, mean_includes_cls);
    w.insert(w.end(), part.begin(), part.end());
  }
  return block_weighted_sum(tokens, w, prompts.size());
}

}  // namespace aio::inline AIO_ABI
