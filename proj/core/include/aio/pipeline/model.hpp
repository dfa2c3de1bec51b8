#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aio/align/alignment.hpp"
#include "aio/backbone/backbone.hpp"
#include "aio/embed/embedders.hpp"
#include "aio/head/head.hpp"
#include "aio/numcore/params.hpp"
#include "aio/pipeline/config.hpp"

namespace aio::inline AIO_ABI {

enum class PromptMode { sentence, class_name };
PromptMode parse_prompt_mode(const std::string& s);

struct ModelConfig {
  PatchConfig patch;
  BackboneConfig backbone;
  HeadConfig head;
  std::size_t vocab_size = Vocab::kFirstWord;
  std::size_t text_len = 16;
  LanguageReduction reduction = LanguageReduction::mean;
  bool mean_includes_cls = true;
  bool use_language = true;
  std::size_t align_dim = 64;
  LanguageReduction align_language_pool = LanguageReduction::mean;
  ContrastConfig contrast;

  static ModelConfig from(const Config& c, std::size_t vocab_size);
  void validate() const;
};

/// All learnable state, registered in a fixed order in `params`.
struct Model {
  ModelConfig cfg;
  ParamStore params;
  Tensor patch_weight, patch_bias;
  Tensor search_pos, template_pos;
  Tensor text_table;
  BackboneParams backbone;
  HeadParams head;
  AlignProjections align;

  static Model create(const ModelConfig& cfg, Rng& rng);
};

/// Inputs of a batch of B samples.
struct ModelInput {
  Tensor templates;  // [B,3,Z,Z]
  Tensor searches;   // [B,3,X,X]
  std::vector<TokenizedPrompt> prompts;
  std::size_t batch() const { return prompts.size(); }
};

struct ModelOutput {
  HeadOutput head;
  Tensor fx, fz, ft;  // [B,C] alignment embeddings, defined when requested
};

ModelOutput forward(const Model& m, const ModelInput& in, bool with_alignment);

struct LossWeights {
  double giou = 2, l1 = 5, cma = 1, ima = 1;
  static LossWeights from(const Config& c);
};

/// Scalar loss tensors of one batch; alignment terms may be undefined.
struct LossTerms {
  Tensor cls, giou, l1, cma, ima;
};

struct LossBreakdown {
  double total = 0, cls = 0, giou = 0, l1 = 0, cma = 0, ima = 0;
  std::string str() const;
};

/// L_cls + (w_giou L_giou + w_1 L_1) + w_cma L_cma + w_ima L_ima.
Tensor total_loss(const LossTerms& t, const LossWeights& w);

/// Per-sample supervision for the head.
struct HeadTargets {
  std::vector<BoxTarget> boxes;
  Tensor heatmaps;  // [B,1,G,G]
};

HeadTargets make_targets(const std::vector<BBox>& search_boxes, std::size_t grid, std::size_t stride);

LossTerms compute_losses(const Model& m, const ModelOutput& out, const HeadTargets& targets);

}  // namespace aio::inline AIO_ABI
