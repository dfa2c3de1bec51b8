#include "aio/pipeline/model.hpp"

#include <cstdio>

#include "aio/numcore/ops.hpp"

namespace aio::inline AIO_ABI {

PromptMode parse_prompt_mode(const std::string& s) {
  if (s == "sentence") return PromptMode::sentence;
  if (s == "class") return PromptMode::class_name;
  throw ConfigError("unknown prompt mode '" + s + "'");
}

namespace {

LanguageReduction parse_reduction(const std::string& s) {
  return s == "cls" ? LanguageReduction::cls : LanguageReduction::mean;
}

}  // namespace

ModelConfig ModelConfig::from(const Config& c, std::size_t vocab_size) {
  ModelConfig m;
  m.patch.patch = std::size_t(c.get_int("patch"));
  m.patch.search_size = std::size_t(c.get_int("search_size"));
  m.patch.template_size = std::size_t(c.get_int("template_size"));
  m.patch.dim = std::size_t(c.get_int("dim"));
  m.backbone.layers = std::size_t(c.get_int("layers"));
  m.backbone.heads = std::size_t(c.get_int("heads"));
  m.backbone.dim = m.patch.dim;
  m.backbone.ffn_ratio = std::size_t(c.get_int("ffn_ratio"));
  m.backbone.norm = c.get("norm") == "pre" ? NormPlacement::pre : NormPlacement::post;
  m.backbone.mixup_shared_linear = c.get_bool("mixup_shared");
  m.head.dim = m.patch.dim;
  m.head.grid = m.patch.search_size / std::max<std::size_t>(1, m.patch.patch);
  m.head.channels = c.get_sizes("head_channels");
  m.vocab_size = vocab_size;
  m.text_len = std::size_t(c.get_int("text_len"));
  m.reduction = parse_reduction(c.get("reduction"));
  m.mean_includes_cls = c.get_bool("mean_includes_cls");
  m.use_language = c.get_bool("language");
  m.align_dim = std::size_t(c.get_int("align_dim"));
  m.align_language_pool = parse_reduction(c.get("align_language_pool"));
  m.contrast.tau = c.get_real("tau");
  m.contrast.mode = c.get("denominator") == "literal" ? DenominatorMode::literal : DenominatorMode::standard;
  m.validate();
  return m;
}

void ModelConfig::validate() const {
  patch.validate();
  backbone.validate();
  head.validate();
  contrast.validate();
  if (text_len < 2) throw ConfigError("text_len must be at least 2");
  if (align_dim == 0) throw ConfigError("align_dim must be positive");
  if (vocab_size < Vocab::kFirstWord) throw ConfigError("vocabulary too small");
}

Model Model::create(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  const auto d = cfg.patch.dim;
  auto& s = m.params;
  m.patch_weight = s.add("embed.patch.weight", trunc_normal({cfg.patch.patch_width(), d}, 0.02, rng));
  m.patch_bias = s.add("embed.patch.bias", Tensor::zeros({d}));
  m.search_pos = s.add("embed.search_pos", trunc_normal({cfg.patch.search_tokens(), d}, 0.02, rng));
  m.template_pos = s.add("embed.template_pos", trunc_normal({cfg.patch.template_tokens(), d}, 0.02, rng));
  m.text_table = s.add("embed.text", trunc_normal({cfg.vocab_size, d}, 1.0, rng));
  m.backbone = BackboneParams::create(s, cfg.backbone, rng);
  m.head = HeadParams::create(s, cfg.head, rng);
  m.align = AlignProjections::create(s, d, cfg.align_dim, rng);
  return m;
}

ModelOutput forward(const Model& m, const ModelInput& in, bool with_alignment) {
  const auto b = in.batch();
  if (b == 0 || in.searches.dim(0) != b || in.templates.dim(0) != b) {
    throw DimensionError("forward: batch of " + std::to_string(b) + " prompts with images " +
                         shape_str(in.searches.shape()) + " and " + shape_str(in.templates.shape()));
  }
  const auto& c = m.cfg;
  const Tensor hx = patch_embed(in.searches, c.patch.patch, m.patch_weight, m.patch_bias, m.search_pos);
  const Tensor hz = patch_embed(in.templates, c.patch.patch, m.patch_weight, m.patch_bias, m.template_pos);
  const bool need_text = c.use_language || with_alignment;
  const Tensor ht = need_text ? embed_text(in.prompts, m.text_table) : Tensor{};

  VisionPair mixed{hx, hz};
  if (c.use_language) {
    mixed = modal_mixup(hx, hz, reduce_language(ht, in.prompts, c.reduction, c.mean_includes_cls), m.backbone.mixup);
  }
  const VisionPair enc = encode(mixed, m.backbone, c.backbone, b);

  ModelOutput out;
  out.head = head_forward(enc.search, m.head, b);
  if (with_alignment) {
    out.fx = project_pool(hx, m.align.search_w, m.align.search_b, b);
    out.fz = project_pool(hz, m.align.template_w, m.align.template_b, b);
    out.ft = linear(reduce_language(ht, in.prompts, c.align_language_pool, c.mean_includes_cls), m.align.language_w,
                    m.align.language_b);
  }
  return out;
}

LossWeights LossWeights::from(const Config& c) {
  LossWeights w{c.get_real("lambda_giou"), c.get_real("lambda_l1"), c.get_real("lambda_cma"), c.get_real("lambda_ima")};
  if (w.giou < 0 || w.l1 < 0 || w.cma < 0 || w.ima < 0) throw ConfigError("loss weights must be non-negative");
  return w;
}

std::string LossBreakdown::str() const {
  char buf[192];
  std::snprintf(buf, sizeof buf, "total=%.6g cls=%.6g giou=%.6g l1=%.6g cma=%.6g ima=%.6g", total, cls, giou, l1, cma,
                ima);
  return buf;
}

Tensor total_loss(const LossTerms& t, const LossWeights& w) {
  Tensor total = add(t.cls, add(scale(t.giou, Real(w.giou)), scale(t.l1, Real(w.l1))));
  if (t.cma.defined()) total = add(total, scale(t.cma, Real(w.cma)));
  if (t.ima.defined()) total = add(total, scale(t.ima, Real(w.ima)));
  return total;
}

HeadTargets make_targets(const std::vector<BBox>& boxes, std::size_t grid, std::size_t stride) {
  HeadTargets t;
  const auto cells = grid * grid;
  std::vector<Real> heat(boxes.size() * cells);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    t.boxes.push_back(encode_box(boxes[i], grid, stride));
    const auto h = gaussian_target(t.boxes.back(), grid);
    std::copy(h.begin(), h.end(), heat.begin() + std::ptrdiff_t(i * cells));
  }
  t.heatmaps = Tensor({boxes.size(), 1, grid, grid}, std::move(heat));
  return t;
}

LossTerms compute_losses(const Model& m, const ModelOutput& out, const HeadTargets& targets) {
  LossTerms t;
  t.cls = focal_loss(out.head.score, targets.heatmaps);
  const auto pred = boxes_at(out.head, targets.boxes);
  const auto gt = box_columns(targets.boxes, out.head.grid());
  t.giou = giou_loss(pred, gt);
  t.l1 = l1_loss(pred, gt);
  if (out.fx.defined()) {
    t.cma = cma_loss(out.fx, out.fz, out.ft, m.cfg.contrast);
    t.ima = ima_loss(out.fx, out.fz, m.cfg.contrast);
  }
  return t;
}

}  // namespace aio::inline AIO_ABI
