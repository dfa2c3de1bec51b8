#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aio/numcore/params.hpp"
#include "aio/numcore/tensor.hpp"

namespace aio::inline AIO_ABI {

enum class NormPlacement { post, pre };

struct BackboneConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t dim = 96;
  std::size_t ffn_ratio = 4;
  NormPlacement norm = NormPlacement::post;
  /// One mixup projection for both vision streams (the default) or one each.
  bool mixup_shared_linear = true;

  void validate() const;
};

struct EncoderLayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln2_gain, ln2_bias;

  /// Registers "<prefix>.*" parameters: trunc-normal(0.02) weights, zero
  /// biases, unit layernorm gains.
  static EncoderLayerParams create(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg, Rng& rng);
};

struct MixupParams {
  Tensor weight, bias;                    // language -> search gate (and template when shared)
  Tensor template_weight, template_bias;  // only when not shared

  static MixupParams create(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg, Rng& rng);
};

struct BackboneParams {
  MixupParams mixup;
  std::vector<EncoderLayerParams> layers;
  Tensor final_gain, final_bias;  // pre-norm only

  static BackboneParams create(ParamStore& store, const BackboneConfig& cfg, Rng& rng);
};

struct VisionPair {
  Tensor search;    // [B*N_x, D]
  Tensor template_;  // [B*N_z, D]
};

/// Gates vision tokens with the projected language vector and keeps a
/// residual: F = H * Linear(t) + H for both streams. `language` is [B, D]
/// with one row per block of tokens.
VisionPair modal_mixup(const Tensor& search, const Tensor& template_tokens, const Tensor& language,
                       const MixupParams& params);

/// One encoder layer over `blocks` independent sequences [B*T, D].
Tensor encoder_layer(const Tensor& tokens, const EncoderLayerParams& p, const BackboneConfig& cfg, std::size_t blocks);

/// Runs the concatenated [search; template] sequence of every block through
/// the layer stack and splits it back.
VisionPair encode(const VisionPair& mixed, const BackboneParams& params, const BackboneConfig& cfg, std::size_t blocks);

/// modal_mixup followed by encode.
VisionPair backbone_forward(const Tensor& search, const Tensor& template_tokens, const Tensor& language,
                            const BackboneParams& params, const BackboneConfig& cfg);

}  // namespace aio::inline AIO_ABI
