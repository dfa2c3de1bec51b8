#include <cmath>

#include "aio/backbone/backbone.hpp"
#include "aio/numcore/ops.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace aio;
using testing::bit_equal;
using testing::random_tensor;

namespace {

void fill(Tensor t, Real v) {
  for (auto& x : t.mutable_values()) x = v;
}

BackboneConfig small_config(std::size_t layers = 2) {
  BackboneConfig cfg;
  cfg.layers = layers;
  cfg.heads = 2;
  cfg.dim = 8;
  return cfg;
}

// Row-wise layernorm with unit gain and zero bias.
std::vector<double> ln_rows(std::vector<double> x, std::size_t d, double eps = 1e-5) {
  for (std::size_t r = 0; r < x.size() / d; ++r) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < d; ++j) mu += x[r * d + j];
    mu /= double(d);
    for (std::size_t j = 0; j < d; ++j) var += (x[r * d + j] - mu) * (x[r * d + j] - mu);
    var /= double(d);
    for (std::size_t j = 0; j < d; ++j) x[r * d + j] = (x[r * d + j] - mu) / std::sqrt(var + eps);
  }
  return x;
}

}  // namespace

TEST_CASE("modal mixup") {
  Rng rng(1);
  ParamStore store;
  auto cfg = small_config();
  auto mix = MixupParams::create(store, "mixup", cfg, rng);
  auto hx = random_tensor({6, 8}, rng), hz = random_tensor({3, 8}, rng), t = random_tensor({8}, rng);

  SUBCASE("zero gate is the identity") {
    fill(mix.weight, 0);
    auto f = modal_mixup(hx, hz, t, mix);
    CHECK(bit_equal(f.search, hx));
    CHECK(bit_equal(f.template_, hz));
  }
  SUBCASE("unit gate doubles") {
    fill(mix.weight, 0);
    fill(mix.bias, 1);
    auto f = modal_mixup(hx, hz, t, mix);
    for (std::size_t i = 0; i < hx.numel(); ++i) CHECK(f.search.at(i) == 2 * hx.at(i));
  }
  SUBCASE("elementwise oracle") {
    auto f = modal_mixup(hx, hz, t, mix);
    for (std::size_t j = 0; j < 8; ++j) {
      double g = mix.bias.at(j);
      for (std::size_t k = 0; k < 8; ++k) g += double(t.at(k)) * mix.weight.at(k * 8 + j);
      for (std::size_t i = 0; i < 6; ++i)
        CHECK(f.search.at(i, j) == doctest::Approx(hx.at(i, j) * g + hx.at(i, j)).epsilon(1e-5));
      for (std::size_t i = 0; i < 3; ++i)
        CHECK(f.template_.at(i, j) == doctest::Approx(hz.at(i, j) * g + hz.at(i, j)).epsilon(1e-5));
    }
  }
  SUBCASE("separate template projection") {
    cfg.mixup_shared_linear = false;
    ParamStore s2;
    auto sep = MixupParams::create(s2, "mixup", cfg, rng);
    CHECK(s2.contains("mixup.template_weight"));
    fill(sep.template_weight, 0);
    fill(sep.template_bias, 0);
    auto f = modal_mixup(hx, hz, t, sep);
    CHECK(bit_equal(f.template_, hz));
    CHECK_FALSE(bit_equal(f.search, hx));
  }
}

TEST_CASE("encoder layer") {
  Rng rng(2);
  auto cfg = small_config();
  ParamStore store;
  auto p = EncoderLayerParams::create(store, "layer", cfg, rng);
  CHECK(store.size() == 16);

  SUBCASE("residual-only path is a double layernorm") {
    for (const auto& t : {p.wo, p.bo, p.ffn_w2, p.ffn_b2}) fill(t, 0);
    auto x = random_tensor({5, 8}, rng);
    auto y = encoder_layer(x, p, cfg, 1);
    auto ref = ln_rows(ln_rows(testing::to_vec(x), 8), 8);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.at(i) == doctest::Approx(ref[i]).epsilon(1e-4));
  }
  SUBCASE("single token attends to itself") {
    cfg.heads = 1;
    for (const auto& t : {p.ffn_w2, p.ffn_b2}) fill(t, 0);
    for (auto t : {p.bv, p.bo}) {
      auto r = random_tensor({8}, rng);
      std::copy(r.values().begin(), r.values().end(), t.mutable_values().begin());
    }
    auto x = random_tensor({1, 8}, rng);
    auto y = encoder_layer(x, p, cfg, 1);
    auto v = oracle::matmul(testing::to_vec(x), testing::to_vec(p.wv), 1, 8, 8);
    for (std::size_t j = 0; j < 8; ++j) v[j] += p.bv.at(j);
    auto o = oracle::matmul(v, testing::to_vec(p.wo), 1, 8, 8);
    for (std::size_t j = 0; j < 8; ++j) o[j] += p.bo.at(j) + x.at(j);
    auto ref = ln_rows(ln_rows(o, 8), 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(y.at(j) == doctest::Approx(ref[j]).epsilon(1e-4));
  }
  SUBCASE("permutation equivariance") {
    auto x = random_tensor({4, 8}, rng);
    auto perm = concat_rows({slice_rows(x, 2, 1), slice_rows(x, 0, 1), slice_rows(x, 3, 1), slice_rows(x, 1, 1)});
    auto y = encoder_layer(x, p, cfg, 1), yp = encoder_layer(perm, p, cfg, 1);
    const std::size_t order[] = {2, 0, 3, 1};
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 8; ++j) CHECK(yp.at(r, j) == doctest::Approx(y.at(order[r], j)).epsilon(1e-5));
  }
  SUBCASE("rows are layer-normalised") {
    auto y = encoder_layer(random_tensor({7, 8}, rng, -3, 3), p, cfg, 1);
    for (std::size_t r = 0; r < 7; ++r) {
      double mu = 0;
      for (std::size_t j = 0; j < 8; ++j) mu += y.at(r, j);
      CHECK(std::abs(mu / 8) <= 1e-5);
    }
  }
  SUBCASE("heads must divide dim") {
    cfg.heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("backbone forward") {
  Rng rng(3);
  SUBCASE("empty stack returns the mixup output") {
    auto cfg = small_config(0);
    ParamStore store;
    auto params = BackboneParams::create(store, cfg, rng);
    auto hx = random_tensor({4, 8}, rng), hz = random_tensor({2, 8}, rng), t = random_tensor({8}, rng);
    auto out = backbone_forward(hx, hz, t, params, cfg);
    auto mixed = modal_mixup(hx, hz, t, params.mixup);
    CHECK(bit_equal(out.search, mixed.search));
    CHECK(bit_equal(out.template_, mixed.template_));
  }
  SUBCASE("zero language equals the vision-only path") {
    auto cfg = small_config();
    ParamStore store;
    auto params = BackboneParams::create(store, cfg, rng);
    auto hx = random_tensor({4, 8}, rng), hz = random_tensor({2, 8}, rng);
    auto out = backbone_forward(hx, hz, Tensor::zeros({8}), params, cfg);
    auto vision = encode({hx, hz}, params, cfg, 1);
    CHECK(bit_equal(out.search, vision.search));
    CHECK(bit_equal(out.template_, vision.template_));
  }
  SUBCASE("desk shapes") {
    BackboneConfig cfg;
    ParamStore store;
    auto params = BackboneParams::create(store, cfg, rng);
    auto out = backbone_forward(random_tensor({64, 96}, rng), random_tensor({16, 96}, rng), random_tensor({96}, rng),
                                params, cfg);
    CHECK(out.search.shape() == Shape{64, 96});
    CHECK(out.template_.shape() == Shape{16, 96});
  }
  SUBCASE("batched blocks match per-sample runs") {
    auto cfg = small_config();
    ParamStore store;
    auto params = BackboneParams::create(store, cfg, rng);
    auto hx = random_tensor({2 * 4, 8}, rng), hz = random_tensor({2 * 2, 8}, rng), t = random_tensor({2, 8}, rng);
    auto batch = backbone_forward(hx, hz, t, params, cfg);
    for (std::size_t b = 0; b < 2; ++b) {
      auto one = backbone_forward(slice_rows(hx, b * 4, 4), slice_rows(hz, b * 2, 2), slice_rows(t, b, 1), params, cfg);
      auto part = slice_rows(batch.search, b * 4, 4);
      for (std::size_t i = 0; i < part.numel(); ++i) CHECK(part.at(i) == doctest::Approx(one.search.at(i)).epsilon(1e-5));
    }
  }
  SUBCASE("pre-norm placement") {
    auto cfg = small_config();
    cfg.norm = NormPlacement::pre;
    ParamStore store;
    auto params = BackboneParams::create(store, cfg, rng);
    CHECK(store.contains("encoder.norm.gain"));
    auto out = backbone_forward(random_tensor({4, 8}, rng), random_tensor({2, 8}, rng), random_tensor({8}, rng),
                                params, cfg);
    for (auto v : out.search.values()) CHECK(std::isfinite(v));
  }
  SUBCASE("search output depends on the template") {
    auto cfg = small_config();
    ParamStore store;
    auto params = BackboneParams::create(store, cfg, rng);
    auto hx = random_tensor({4, 8}, rng), hz = random_tensor({2, 8}, rng);
    hz.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    auto out = backbone_forward(hx, hz, random_tensor({8}, rng), params, cfg);
    tape.backward(sum(mul(out.search, random_tensor({4, 8}, rng))));
    double norm = 0;
    for (auto g : hz.grad()) norm += double(g) * g;
    CHECK(norm > 1e-12);
  }
}
