// Module-level backward passes against central differences.

#include "aio/align/alignment.hpp"
#include "aio/backbone/backbone.hpp"
#include "aio/embed/embedders.hpp"
#include "aio/head/head.hpp"
#include "aio/numcore/grad_check.hpp"
#include "aio/numcore/ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aio;
using testing::random_tensor;

namespace {

Tensor probe(const Tensor& y, std::uint64_t seed = 17) {
  Rng rng(seed);
  return sum(mul(reshape(y, {y.numel()}), random_tensor({y.numel()}, rng)));
}

void expect_pass(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, double h = 1e-3) {
  GradCheckOptions opt;
  opt.h = h;
  auto rep = grad_check(f, inputs, opt);
  INFO(rep.summary());
  CHECK(rep.passed);
}

}  // namespace

TEST_CASE("embedder gradients") {
  Rng rng(1);
  auto img = random_tensor({2, 3, 8, 8}, rng), proj = random_tensor({3 * 16, 5}, rng);
  auto bias = random_tensor({5}, rng), pos = random_tensor({4, 5}, rng);
  expect_pass([&] { return probe(patch_embed(img, 4, proj, bias, pos)); }, {proj, bias, pos});

  auto table = random_tensor({6, 4}, rng);
  std::vector<TokenizedPrompt> prompts{{{1, 3, 3, 0}, {1, 1, 1, 0}}, {{1, 5, 2, 4}, {1, 1, 1, 1}}};
  expect_pass([&] { return probe(reduce_language(embed_text(prompts, table), prompts, LanguageReduction::mean)); },
              {table});
  expect_pass([&] { return probe(reduce_language(embed_text(prompts, table), prompts, LanguageReduction::cls)); },
              {table});
}

TEST_CASE("backbone gradients") {
  Rng rng(2);
  for (auto norm : {NormPlacement::post, NormPlacement::pre}) {
    BackboneConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.dim = 4;
    cfg.ffn_ratio = 2;
    cfg.norm = norm;
    ParamStore store;
    auto params = BackboneParams::create(store, cfg, rng);
    for (auto [name, t] : store.entries()) {
      auto r = random_tensor(t.shape(), rng, -0.5, 0.5);
      std::copy(r.values().begin(), r.values().end(), t.mutable_values().begin());
    }
    auto hx = random_tensor({2 * 3, 4}, rng), hz = random_tensor({2 * 2, 4}, rng), t = random_tensor({2, 4}, rng);
    std::vector<Tensor> inputs{hx, hz, t};
    for (const auto& [name, p] : store.entries()) inputs.push_back(p);
    expect_pass(
        [&] {
          auto out = backbone_forward(hx, hz, t, params, cfg);
          return add(probe(out.search, 3), probe(out.template_, 4));
        },
        inputs, 1e-5);  // large random weights: smaller step keeps truncation error in check
  }
}

TEST_CASE("alignment gradients") {
  Rng rng(3);
  auto fx = random_tensor({4, 5}, rng), fz = random_tensor({4, 5}, rng), ft = random_tensor({4, 5}, rng);
  for (auto mode : {DenominatorMode::standard, DenominatorMode::literal}) {
    const ContrastConfig cfg{0.5, mode};
    expect_pass([&] { return cma_loss(fx, fz, ft, cfg); }, {fx, fz, ft});
    expect_pass([&] { return ima_loss(fx, fz, cfg); }, {fx, fz});
  }
  auto tok = random_tensor({4 * 3, 6}, rng), w = random_tensor({6, 5}, rng), b = random_tensor({5}, rng);
  expect_pass([&] { return ima_loss(project_pool(tok, w, b, 4), fz, ContrastConfig{}); }, {tok, w, b});
}

TEST_CASE("head and box loss gradients") {
  Rng rng(4);
  HeadConfig cfg{4, 4, {3, 2}};
  ParamStore store;
  auto params = HeadParams::create(store, cfg, rng);
  auto tokens = random_tensor({2 * 16, 4}, rng);
  std::vector<Tensor> inputs{tokens};
  for (const auto& [name, p] : store.entries()) inputs.push_back(p);
  std::vector<BoxTarget> targets{{1, 2, 0.3, 0.6, 0.4, 0.3}, {3, 0, 0.5, 0.1, 0.2, 0.5}};
  auto target_map = Tensor::zeros({2, 1, 4, 4});
  for (std::size_t b = 0; b < 2; ++b) {
    auto heat = gaussian_target(targets[b], 4);
    std::copy(heat.begin(), heat.end(), target_map.mutable_values().begin() + b * 16);
  }
  const auto gt = box_columns(targets, 4);
  expect_pass([&] { return focal_loss(head_forward(tokens, params, 2).score, target_map); }, inputs);
  // Some head pre-activations sit within 1e-3 of a ReLU kink at this scale.
  expect_pass([&] { return giou_loss(boxes_at(head_forward(tokens, params, 2), targets), gt); }, inputs, 1e-6);
  expect_pass([&] { return l1_loss(boxes_at(head_forward(tokens, params, 2), targets), gt); }, inputs, 1e-6);

  auto p = random_tensor({3, 5}, rng, 0.05, 0.95), y = random_tensor({3, 5}, rng, 0, 0.9);
  y.mutable_values()[4] = 1;
  expect_pass([&] { return focal_loss(p, y); }, {p});
}
