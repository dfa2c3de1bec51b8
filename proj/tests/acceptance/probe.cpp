// Measures library values next to the scalar oracles and writes them as JSON
// for the recipes to compare against golden files.
//
//   aio_probe contrastive|mixup|losses|metrics <out.json>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "aio/align/alignment.hpp"
#include "aio/data/synth.hpp"
#include "aio/numcore/ops.hpp"
#include "aio/pipeline/metrics.hpp"
#include "aio/pipeline/model.hpp"
#include "helpers.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace aio;
using json = nlohmann::ordered_json;

namespace {

oracle::Rows rows_of(const Tensor& t) {
  oracle::Rows r(t.dim(0), oracle::Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) r[i][j] = t.at(i, j);
  return r;
}

json contrastive() {
  Rng rng(2024);
  double worst = 0;
  int cases = 0;
  for (std::size_t n = 2; n <= 8; ++n)
    for (int trial = 0; trial < 4; ++trial) {
      auto fx = testing::random_tensor({n, 16}, rng), fz = testing::random_tensor({n, 16}, rng),
           ft = testing::random_tensor({n, 16}, rng);
      for (bool literal : {false, true}) {
        const ContrastConfig cfg{0.5, literal ? DenominatorMode::literal : DenominatorMode::standard};
        const double c = cma_loss(fx, fz, ft, cfg).item(), i = ima_loss(fx, fz, cfg).item();
        worst = std::max(worst, std::abs(c - oracle::cma(rows_of(fx), rows_of(fz), rows_of(ft), 0.5, literal)));
        worst = std::max(worst, std::abs(i - oracle::ima(rows_of(fx), rows_of(fz), 0.5, literal)));
        cases += 2;
      }
    }
  const ContrastConfig standard;
  const Tensor same2({2, 4}, {0.3, -1, 2, 0.5, 0.3, -1, 2, 0.5});
  const auto s = rows_of(same2);
  json j;
  j["precision"] = sizeof(Real) == 8 ? "double" : "float";
  j["cases"] = cases;
  j["max_abs_error"] = worst;
  j["impl"] = {{"cma_identical_n2", cma_loss(same2, same2, same2, standard).item()},
               {"ima_identical_n2", ima_loss(same2, same2, standard).item()}};
  j["oracle"] = {{"cma_identical_n2", oracle::cma(s, s, s, 0.5, false)},
                 {"ima_identical_n2", oracle::ima(s, s, 0.5, false)}};
  return j;
}

json mixup() {
  const Config cfg;
  const auto vocab = grammar_vocab();
  auto mc = ModelConfig::from(cfg, vocab.size());
  Rng rng(7);
  Model m = Model::create(mc, rng);
  for (auto* t : {&m.backbone.mixup.weight, &m.backbone.mixup.bias})
    for (auto& v : t->mutable_values()) v = 0;

  const std::size_t b = 2, z = mc.patch.template_size, x = mc.patch.search_size;
  ModelInput in{testing::random_tensor({b, 3, z, z}, rng, 0, 1), testing::random_tensor({b, 3, x, x}, rng, 0, 1),
                {tokenize("red circle moving left", vocab, mc.text_len),
                 tokenize("blue square moving up", vocab, mc.text_len)}};
  NoGradScope off;
  const auto with = forward(m, in, false);
  Model vision = m;
  vision.cfg.use_language = false;
  const auto without = forward(vision, in, false);

  std::size_t compared = 0;
  bool equal = true;
  for (auto [a, c] : {std::pair{with.head.score, without.head.score}, {with.head.offset, without.head.offset},
                      {with.head.size, without.head.size}}) {
    equal = equal && testing::bit_equal(a, c);
    compared += a.numel();
  }
  // Sanity: a non-zero gate must change the output.
  for (auto& v : m.backbone.mixup.bias.mutable_values()) v = 0.5;
  const auto gated = forward(m, in, false);
  json j;
  j["bit_equal"] = equal;
  j["compared_values"] = compared;
  j["nonzero_gate_differs"] = !testing::bit_equal(gated.head.score, with.head.score);
  return j;
}

json losses() {
  auto focal = [](Real p, Real y) { return focal_loss(Tensor({1}, {p}), Tensor({1}, {y})).item(); };
  const auto a = BBox::from_xyxy(0, 0, 2, 2), b = BBox::from_xyxy(1, 1, 3, 3);
  LossWeights w;
  auto s = [](double v) { return Tensor::scalar(Real(v)); };
  json j;
  j["impl"] = {{"focal_positive", focal(0.5, 1)},
               {"focal_negative", focal(0.5, 0)},
               {"giou_identical", giou_loss(a, a)},
               {"giou_corner", giou_loss(a, b)},
               {"giou_disjoint", giou_loss(BBox::from_xyxy(0, 0, 1, 1), BBox::from_xyxy(2, 2, 3, 3))},
               {"weighted_sum", total_loss({s(0.1), s(0.2), s(0.04), s(1.0), s(0.5)}, w).item()}};
  j["oracle"] = {{"focal_positive", oracle::focal({0.5}, {1})},
                 {"focal_negative", oracle::focal({0.5}, {0})},
                 {"giou_identical", oracle::giou_loss(0, 0, 2, 2, 0, 0, 2, 2)},
                 {"giou_corner", oracle::giou_loss(0, 0, 2, 2, 1, 1, 3, 3)},
                 {"giou_disjoint", oracle::giou_loss(0, 0, 1, 1, 2, 2, 3, 3)},
                 {"weighted_sum", 0.1 + 2 * 0.2 + 5 * 0.04 + 1.0 + 0.5}};
  return j;
}

json summary(const SequenceMetrics& m) {
  return {{"P", m.P}, {"P_norm", m.P_norm}, {"AUC", m.AUC}, {"cAUC", m.cAUC}, {"ACC", m.ACC}};
}

json metrics() {
  const std::size_t n = 10;
  std::vector<BBox> gt, shifted, half;
  std::vector<double> ious, dists, self_ious, self_dists;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = 20 + 3.0 * double(i), y = 40 - 2.0 * double(i);
    gt.push_back(BBox::from_xywh(x, y, 10, 10));
    shifted.push_back(BBox::from_xywh(x + 30, y, 10, 10));
    half.push_back(BBox::from_xywh(x, y + 2.5, 10, 5));
    ious.push_back(oracle::iou({x, y + 2.5, 10, 5}, {x, y, 10, 10}));
    dists.push_back(oracle::center_distance({x + 30, y, 10, 10}, {x, y, 10, 10}));
    self_ious.push_back(oracle::iou({x, y, 10, 10}, {x, y, 10, 10}));
    self_dists.push_back(oracle::center_distance({x, y, 10, 10}, {x, y, 10, 10}));
  }
  json j;
  j["impl"] = {{"perfect", summary(compute_metrics(gt, gt))},
               {"offset_30px", {{"P", compute_metrics(shifted, gt).P}}},
               {"iou_half", {{"AUC", compute_metrics(half, gt).AUC}, {"ACC", compute_metrics(half, gt).ACC}}}};
  // Complete IoU equals IoU when centres coincide; normalised distance is 0.
  const double self_auc = oracle::average(oracle::rate_curve(self_ious, 20, 20, true));
  j["oracle"] = {{"perfect",
                  {{"P", oracle::rate_curve(self_dists, 50, 1, false)[20]},
                   {"P_norm", oracle::average(oracle::rate_curve(self_dists, 100, 200, false))},
                   {"AUC", self_auc},
                   {"cAUC", self_auc},
                   {"ACC", oracle::average(self_ious)}}},
                 {"offset_30px", {{"P", oracle::rate_curve(dists, 50, 1, false)[20]}}},
                 {"iou_half",
                  {{"AUC", oracle::average(oracle::rate_curve(ious, 20, 20, true))}, {"ACC", oracle::average(ious)}}}};
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: " << argv[0] << " contrastive|mixup|losses|metrics <out.json>\n";
    return 2;
  }
  const std::string what = argv[1];
  try {
    json j;
    if (what == "contrastive") j = contrastive();
    else if (what == "mixup") j = mixup();
    else if (what == "losses") j = losses();
    else if (what == "metrics") j = metrics();
    else throw std::invalid_argument("unknown probe '" + what + "'");
    std::ofstream(argv[2]) << j.dump(2) << '\n';
    std::cout << j.dump() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: probe: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
