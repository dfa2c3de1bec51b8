#include "aio/backbone/backbone.hpp"

#include "aio/numcore/ops.hpp"

namespace aio::inline AIO_ABI {

namespace {
constexpr double kInitSigma = 0.02;

Tensor init_weight(ParamStore& store, const std::string& name, Shape shape, Rng& rng) {
  return store.add(name, trunc_normal(std::move(shape), kInitSigma, rng));
}
Tensor zeros(ParamStore& store, const std::string& name, std::size_t n) { return store.add(name, Tensor::zeros({n})); }
Tensor ones(ParamStore& store, const std::string& name, std::size_t n) { return store.add(name, Tensor::full({n}, 1)); }
}  // namespace

void BackboneConfig::validate() const {
  if (heads == 0 || dim == 0 || dim % heads) {
    throw ConfigError("embedding dim " + std::to_string(dim) + " must be a positive multiple of heads " +
                      std::to_string(heads));
  }
  if (ffn_ratio == 0) throw ConfigError("ffn ratio must be positive");
}

EncoderLayerParams EncoderLayerParams::create(ParamStore& s, const std::string& p, const BackboneConfig& cfg, Rng& rng) {
  const auto d = cfg.dim, f = cfg.dim * cfg.ffn_ratio;
  EncoderLayerParams e;
  e.wq = init_weight(s, p + ".attn.wq", {d, d}, rng);
  e.bq = zeros(s, p + ".attn.bq", d);
  e.wk = init_weight(s, p + ".attn.wk", {d, d}, rng);
  e.bk = zeros(s, p + ".attn.bk", d);
  e.wv = init_weight(s, p + ".attn.wv", {d, d}, rng);
  e.bv = zeros(s, p + ".attn.bv", d);
  e.wo = init_weight(s, p + ".attn.wo", {d, d}, rng);
  e.bo = zeros(s, p + ".attn.bo", d);
  e.ln1_gain = ones(s, p + ".ln1.gain", d);
  e.ln1_bias = zeros(s, p + ".ln1.bias", d);
  e.ffn_w1 = init_weight(s, p + ".ffn.w1", {d, f}, rng);
  e.ffn_b1 = zeros(s, p + ".ffn.b1", f);
  e.ffn_w2 = init_weight(s, p + ".ffn.w2", {f, d}, rng);
  e.ffn_b2 = zeros(s, p + ".ffn.b2", d);
  e.ln2_gain = ones(s, p + ".ln2.gain", d);
  e.ln2_bias = zeros(s, p + ".ln2.bias", d);
  return e;
}

MixupParams MixupParams::create(ParamStore& s, const std::string& p, const BackboneConfig& cfg, Rng& rng) {
  MixupParams m;
  m.weight = init_weight(s, p + ".weight", {cfg.dim, cfg.dim}, rng);
  m.bias = zeros(s, p + ".bias", cfg.dim);
  if (!cfg.mixup_shared_linear) {
    m.template_weight = init_weight(s, p + ".template_weight", {cfg.dim, cfg.dim}, rng);
    m.template_bias = zeros(s, p + ".template_bias", cfg.dim);
  }
  return m;
}

BackboneParams BackboneParams::create(ParamStore& s, const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  BackboneParams b;
  b.mixup = MixupParams::create(s, "mixup", cfg, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    b.layers.push_back(EncoderLayerParams::create(s, "encoder." + std::to_string(l), cfg, rng));
  if (cfg.norm == NormPlacement::pre) {
    b.final_gain = ones(s, "encoder.norm.gain", cfg.dim);
    b.final_bias = zeros(s, "encoder.norm.bias", cfg.dim);
  }
  return b;
}

VisionPair modal_mixup(const Tensor& search, const Tensor& template_tokens, const Tensor& language,
                       const MixupParams& params) {
  const Tensor t = language.ndim() == 1 ? reshape(language, {1, language.numel()}) : language;
  const Tensor gate_x = linear(t, params.weight, params.bias);
  const Tensor gate_z =
      params.template_weight.defined() ? linear(t, params.template_weight, params.template_bias) : gate_x;
  return {add(mul_blocks(search, gate_x), search), add(mul_blocks(template_tokens, gate_z), template_tokens)};
}

namespace {

Tensor self_attention(const Tensor& x, const EncoderLayerParams& p, std::size_t heads, std::size_t blocks) {
  const Tensor q = linear(x, p.wq, p.bq);
  const Tensor k = linear(x, p.wk, p.bk);
  const Tensor v = linear(x, p.wv, p.bv);
  return linear(attention(q, k, v, blocks, heads), p.wo, p.bo);
}

Tensor feed_forward(const Tensor& x, const EncoderLayerParams& p) {
  return linear(gelu(linear(x, p.ffn_w1, p.ffn_b1)), p.ffn_w2, p.ffn_b2);
}

}  // namespace

Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& p, const BackboneConfig& cfg, std::size_t blocks) {
  if (cfg.norm == NormPlacement::post) {
    const Tensor h = layernorm(add(x, self_attention(x, p, cfg.heads, blocks)), p.ln1_gain, p.ln1_bias);
    return layernorm(add(h, feed_forward(h, p)), p.ln2_gain, p.ln2_bias);
  }
  const Tensor h = add(x, self_attention(layernorm(x, p.ln1_gain, p.ln1_bias), p, cfg.heads, blocks));
  return add(h, feed_forward(layernorm(h, p.ln2_gain, p.ln2_bias), p));
}

VisionPair encode(const VisionPair& mixed, const BackboneParams& params, const BackboneConfig& cfg, std::size_t blocks) {
  if (params.layers.empty()) return mixed;
  const std::size_t nx = mixed.search.dim(0) / blocks, nz = mixed.template_.dim(0) / blocks;
  Tensor x = concat_blocks(mixed.search, mixed.template_, blocks);
  for (const auto& layer : params.layers) x = encoder_layer(x, layer, cfg, blocks);
  if (cfg.norm == NormPlacement::pre) x = layernorm(x, params.final_gain, params.final_bias);
  return {slice_blocks(x, blocks, 0, nx), slice_blocks(x, blocks, nx, nz)};
}

VisionPair backbone_forward(const Tensor& search, const Tensor& template_tokens, const Tensor& language,
                            const BackboneParams& params, const BackboneConfig& cfg) {
  const std::size_t blocks = language.ndim() == 1 ? 1 : language.dim(0);
  return encode(modal_mixup(search, template_tokens, language, params.mixup), params, cfg, blocks);
}

}  // namespace aio::inline AIO_ABI
