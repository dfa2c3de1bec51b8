#include "aio/head/head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aio/numcore/ops.hpp"
#include "numcore/op_support.hpp"

namespace aio::inline AIO_ABI {

BBox BBox::from_xywh(double x, double y, double w, double h, Frame f) { return {x + w / 2, y + h / 2, w, h, f}; }

BBox BBox::from_xyxy(double x0, double y0, double x1, double y1, Frame f) {
  return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0, f};
}

namespace {
// Area from the same corners as the intersection, so a box overlaps itself
// with IoU exactly 1.
double corner_area(const BBox& b) { return (b.x1() - b.x0()) * (b.y1() - b.y0()); }
}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih, uni = corner_area(a) + corner_area(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double giou_loss(const BBox& pred, const BBox& gt) {
  if (!(pred.w > 0 && pred.h > 0 && gt.w > 0 && gt.h > 0)) throw ContractError("giou_loss on a zero-area box");
  const double iw = std::max(0.0, std::min(pred.x1(), gt.x1()) - std::max(pred.x0(), gt.x0()));
  const double ih = std::max(0.0, std::min(pred.y1(), gt.y1()) - std::max(pred.y0(), gt.y0()));
  const double inter = iw * ih, uni = corner_area(pred) + corner_area(gt) - inter;
  const double hull = (std::max(pred.x1(), gt.x1()) - std::min(pred.x0(), gt.x0())) *
                      (std::max(pred.y1(), gt.y1()) - std::min(pred.y0(), gt.y0()));
  return 1.0 - (inter / uni - (hull - uni) / hull);
}

double l1_loss(const BBox& pred, const BBox& gt) {
  return (std::abs(pred.cx - gt.cx) + std::abs(pred.cy - gt.cy) + std::abs(pred.w - gt.w) + std::abs(pred.h - gt.h)) / 4;
}

void HeadConfig::validate() const {
  if (dim == 0 || grid == 0) throw ConfigError("head needs a positive dim and grid");
  if (channels.empty()) throw ConfigError("head needs at least one hidden conv layer");
  for (auto c : channels)
    if (c == 0) throw ConfigError("head channel counts must be positive");
}

namespace {

constexpr const char* kBranch[3] = {"score", "offset", "size"};
constexpr std::size_t kOutChannels[3] = {1, 2, 2};
// Score prior of 0.1 keeps the initial focal loss from being dominated by negatives.
constexpr double kScoreBias = -2.19;

ConvLayer conv_layer(ParamStore& s, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                     double sigma, Rng& rng, double bias = 0) {
  return {s.add(name + ".weight", trunc_normal({out, in, k, k}, sigma, rng)),
          s.add(name + ".bias", Tensor::full({out}, Real(bias)))};
}

}  // namespace

HeadParams HeadParams::create(ParamStore& s, const HeadConfig& cfg, Rng& rng) {
  cfg.validate();
  HeadParams p;
  for (int b = 0; b < 3; ++b) {
    std::size_t in = cfg.dim;
    for (std::size_t l = 0; l < cfg.channels.size(); ++l) {
      const auto name = std::string("head.") + kBranch[b] + ".conv" + std::to_string(l);
      p.branches[b].push_back(conv_layer(s, name, in, cfg.channels[l], 3, std::sqrt(2.0 / double(in * 9)), rng));
      in = cfg.channels[l];
    }
    p.branches[b].push_back(conv_layer(s, std::string("head.") + kBranch[b] + ".out", in, kOutChannels[b], 1, 0.01,
                                       rng, b == 0 ? kScoreBias : 0.0));
  }
  return p;
}

HeadOutput head_forward(const Tensor& tokens, const HeadParams& params, std::size_t blocks) {
  if (tokens.ndim() != 2 || blocks == 0 || tokens.dim(0) % blocks) {
    throw DimensionError("head_forward tokens " + shape_str(tokens.shape()));
  }
  const auto n = tokens.dim(0) / blocks;
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(double(n))));
  if (g * g != n) throw ConfigError("search token count " + std::to_string(n) + " is not a square grid");
  const Tensor maps = tokens_to_maps(tokens, blocks, g);
  std::array<Tensor, 3> outs;
  for (int b = 0; b < 3; ++b) {
    const auto& layers = params.branches[b];
    Tensor x = maps;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) x = relu(conv2d(x, layers[l].weight, layers[l].bias, {1, 1}));
    outs[b] = sigmoid(conv2d(x, layers.back().weight, layers.back().bias));
  }
  return {outs[0], outs[1], outs[2]};
}

BoxTarget encode_box(const BBox& box, std::size_t grid, std::size_t stride) {
  const double side = double(grid * stride);
  const double u = std::clamp(box.cx / double(stride), 0.0, double(grid) - 1e-6);
  const double v = std::clamp(box.cy / double(stride), 0.0, double(grid) - 1e-6);
  BoxTarget t;
  t.col = static_cast<std::size_t>(u);
  t.row = static_cast<std::size_t>(v);
  t.offset_x = u - double(t.col);
  t.offset_y = v - double(t.row);
  t.w = std::clamp(box.w / side, 1e-6, 1.0);
  t.h = std::clamp(box.h / side, 1e-6, 1.0);
  return t;
}

std::vector<Real> gaussian_target(const BoxTarget& t, std::size_t grid) {
  const double sigma = std::max(1.0, double(grid) / 16.0);
  std::vector<Real> heat(grid * grid);
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j) {
      const double di = double(i) - double(t.row), dj = double(j) - double(t.col);
      heat[i * grid + j] = Real(std::exp(-(di * di + dj * dj) / (2 * sigma * sigma)));
    }
  return heat;
}

Tensor focal_loss(const Tensor& score, const Tensor& target, double alpha, double beta) {
  detail::require_same_shape(score, target, "focal_loss");
  constexpr double kEps = 1e-6;
  auto p = score.values();
  auto y = target.values();
  std::size_t npos = 0;
  for (auto v : y) npos += v >= Real(1);
  const double norm = double(std::max<std::size_t>(1, npos));
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(double(p[i]), kEps, 1 - kEps);
    if (y[i] >= Real(1))
      total += std::pow(1 - q, alpha) * std::log(q);
    else
      total += std::pow(1 - double(y[i]), beta) * std::pow(q, alpha) * std::log(1 - q);
  }
  Tensor out = Tensor::scalar(Real(-total / norm));
  if (auto* tape = detail::track(out, {&score})) {
    tape->record([score, target, out, alpha, beta, norm] {
      if (!out.has_grad()) return;
      const double go = out.grad()[0];
      auto p = score.values();
      auto y = target.values();
      auto gp = score.grad_buffer();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = double(p[i]);
        if (q < kEps || q > 1 - kEps) continue;
        double d;
        if (y[i] >= Real(1))
          d = -alpha * std::pow(1 - q, alpha - 1) * std::log(q) + std::pow(1 - q, alpha) / q;
        else
          d = std::pow(1 - double(y[i]), beta) *
              (alpha * std::pow(q, alpha - 1) * std::log(1 - q) - std::pow(q, alpha) / (1 - q));
        gp[i] += Real(-go * d / norm);
      }
    });
  }
  return out;
}

namespace {

Tensor column(std::vector<Real> v) {
  const auto n = v.size();
  return Tensor({n, 1}, std::move(v));
}

}  // namespace

BoxColumns boxes_at(const HeadOutput& out, const std::vector<BoxTarget>& targets) {
  const auto b = out.batch(), g = out.grid(), cells = g * g;
  if (targets.size() != b) throw DimensionError("boxes_at: " + std::to_string(targets.size()) + " targets for batch " +
                                                std::to_string(b));
  std::vector<std::size_t> first(b), second(b);
  std::vector<Real> col(b), row(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto cell = targets[i].row * g + targets[i].col;
    first[i] = i * 2 * cells + cell;
    second[i] = i * 2 * cells + cells + cell;
    col[i] = Real(double(targets[i].col) / double(g));
    row[i] = Real(double(targets[i].row) / double(g));
  }
  const Tensor off = reshape(out.offset, {b * 2 * cells, 1});
  const Tensor size = reshape(out.size, {b * 2 * cells, 1});
  const Real inv_g = Real(1.0 / double(g));
  return {add(scale(gather_rows(off, first), inv_g), column(col)),
          add(scale(gather_rows(off, second), inv_g), column(row)), gather_rows(size, first), gather_rows(size, second)};
}

BoxColumns box_columns(const std::vector<BoxTarget>& targets, std::size_t grid) {
  std::vector<Real> cx, cy, w, h;
  for (const auto& t : targets) {
    cx.push_back(Real((double(t.col) + t.offset_x) / double(grid)));
    cy.push_back(Real((double(t.row) + t.offset_y) / double(grid)));
    w.push_back(Real(t.w));
    h.push_back(Real(t.h));
  }
  return {column(cx), column(cy), column(w), column(h)};
}

Tensor giou_loss(const BoxColumns& p, const BoxColumns& g) {
  const Real half(0.5);
  const Tensor px0 = sub(p.cx, scale(p.w, half)), px1 = add(p.cx, scale(p.w, half));
  const Tensor py0 = sub(p.cy, scale(p.h, half)), py1 = add(p.cy, scale(p.h, half));
  const Tensor gx0 = sub(g.cx, scale(g.w, half)), gx1 = add(g.cx, scale(g.w, half));
  const Tensor gy0 = sub(g.cy, scale(g.h, half)), gy1 = add(g.cy, scale(g.h, half));
  const Tensor iw = relu(sub(minimum(px1, gx1), maximum(px0, gx0)));
  const Tensor ih = relu(sub(minimum(py1, gy1), maximum(py0, gy0)));
  const Tensor inter = mul(iw, ih);
  const Tensor uni = sub(add(mul(p.w, p.h), mul(g.w, g.h)), inter);
  const Tensor hull = mul(sub(maximum(px1, gx1), minimum(px0, gx0)), sub(maximum(py1, gy1), minimum(py0, gy0)));
  const Tensor giou = sub(div(inter, uni), div(sub(hull, uni), hull));
  return add_scalar(neg(mean(giou)), Real(1));
}

Tensor l1_loss(const BoxColumns& p, const BoxColumns& g) {
  return mean(abs(sub(concat_cols({p.cx, p.cy, p.w, p.h}), concat_cols({g.cx, g.cy, g.w, g.h}))));
}

BBox CropMeta::to_image(const BBox& b) const {
  return {origin_x + b.cx / scale, origin_y + b.cy / scale, b.w / scale, b.h / scale, Frame::image};
}

BBox CropMeta::to_crop(const BBox& b) const {
  return {(b.cx - origin_x) * scale, (b.cy - origin_y) * scale, b.w * scale, b.h * scale, Frame::search_crop};
}

std::vector<double> hanning_window(std::size_t grid) {
  std::vector<double> h(grid), out(grid * grid);
  for (std::size_t k = 0; k < grid; ++k)
    h[k] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * double(k + 1) / double(grid + 1));
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j) out[i * grid + j] = h[i] * h[j];
  return out;
}

namespace {

BBox clip(BBox b, double w, double h) {
  if (w <= 0 || h <= 0) return b;
  double x0 = std::clamp(b.x0(), 0.0, w), x1 = std::clamp(b.x1(), 0.0, w);
  double y0 = std::clamp(b.y0(), 0.0, h), y1 = std::clamp(b.y1(), 0.0, h);
  // Keep at least one pixel so a box pushed off-frame stays usable.
  if (x1 - x0 < 1) {
    const double c = std::clamp((x0 + x1) / 2, 0.5, w - 0.5);
    x0 = c - 0.5, x1 = c + 0.5;
  }
  if (y1 - y0 < 1) {
    const double c = std::clamp((y0 + y1) / 2, 0.5, h - 0.5);
    y0 = c - 0.5, y1 = c + 0.5;
  }
  return BBox::from_xyxy(x0, y0, x1, y1, b.frame);
}

}  // namespace

BBox decode(const HeadOutput& out, const CropMeta& meta, const DecodeOptions& opt, std::size_t index) {
  const auto g = out.grid(), cells = g * g;
  if (index >= out.batch()) throw ContractError("decode index out of range");
  auto score = out.score.values().subspan(index * cells, cells);
  const auto window = opt.window ? hanning_window(g) : std::vector<double>{};
  std::size_t best = 0;
  double best_v = -1;
  for (std::size_t c = 0; c < cells; ++c) {
    double v = score[c];
    if (opt.window) v = (1 - opt.window_weight) * v + opt.window_weight * window[c];
    if (v > best_v) best_v = v, best = c;
  }
  auto off = out.offset.values().subspan(index * 2 * cells, 2 * cells);
  auto size = out.size.values().subspan(index * 2 * cells, 2 * cells);
  const double stride = double(meta.crop_size) / double(g);
  const double row = double(best / g), col = double(best % g);
  const BBox crop{(col + off[best]) * stride, (row + off[cells + best]) * stride, size[best] * double(meta.crop_size),
                  size[cells + best] * double(meta.crop_size), Frame::search_crop};
  return clip(meta.to_image(crop), meta.image_w, meta.image_h);
}

}  // namespace aio::inline AIO_ABI
