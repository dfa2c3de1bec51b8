#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "aio/numcore/params.hpp"
#include "aio/numcore/tensor.hpp"

namespace aio::inline AIO_ABI {

enum class Frame { search_crop, image };

/// Center-size box in pixels.
struct BBox {
  double cx = 0, cy = 0, w = 0, h = 0;
  Frame frame = Frame::image;

  static BBox from_xywh(double x, double y, double w, double h, Frame f = Frame::image);
  static BBox from_xyxy(double x0, double y0, double x1, double y1, Frame f = Frame::image);
  double x0() const { return cx - w / 2; }
  double y0() const { return cy - h / 2; }
  double x1() const { return cx + w / 2; }
  double y1() const { return cy + h / 2; }
  double area() const { return w * h; }
};

double iou(const BBox& a, const BBox& b);
/// 1 - GIoU. Throws ContractError on a zero-area box.
double giou_loss(const BBox& pred, const BBox& gt);
/// Mean absolute difference of (cx, cy, w, h).
double l1_loss(const BBox& pred, const BBox& gt);

struct HeadConfig {
  std::size_t dim = 96;
  std::size_t grid = 8;
  std::vector<std::size_t> channels{64, 64, 32, 16};  // 3x3 conv + ReLU stack per branch
  void validate() const;
};

struct ConvLayer {
  Tensor weight, bias;
};

struct HeadParams {
  std::array<std::vector<ConvLayer>, 3> branches;  // score, offset, size; last layer is the 1x1 output conv

  static HeadParams create(ParamStore& store, const HeadConfig& cfg, Rng& rng);
};

/// Batched maps after sigmoid: score [B,1,G,G], offset [B,2,G,G], size [B,2,G,G].
struct HeadOutput {
  Tensor score, offset, size;
  std::size_t batch() const { return score.dim(0); }
  std::size_t grid() const { return score.dim(3); }
};

/// Search tokens [B*G*G, D] -> head maps. Throws ConfigError when the token
/// count per block is not a square.
HeadOutput head_forward(const Tensor& search_tokens, const HeadParams& params, std::size_t blocks = 1);

/// Where a crop-frame box lands on the score grid and what the regression
/// branches should output for it.
struct BoxTarget {
  std::size_t row = 0, col = 0;
  double offset_x = 0, offset_y = 0;  // in [0, 1) cell units
  double w = 0, h = 0;                // normalised by the crop side
};

BoxTarget encode_box(const BBox& crop_box, std::size_t grid, std::size_t stride);

/// Gaussian heatmap [G*G] peaking at exactly 1 on `target`'s cell with
/// sigma = max(1, G/16) cells.
std::vector<Real> gaussian_target(const BoxTarget& target, std::size_t grid);

/// CornerNet-style penalty-reduced focal loss over scores in (0,1) of any
/// shape, normalised by max(1, number of cells with target == 1).
Tensor focal_loss(const Tensor& score, const Tensor& target, double alpha = 2, double beta = 4);

/// Boxes as [B,1] columns in normalised search-crop coordinates.
struct BoxColumns {
  Tensor cx, cy, w, h;
};

/// Predicted box of every sample read off the head maps at that sample's
/// ground-truth cell.
BoxColumns boxes_at(const HeadOutput& out, const std::vector<BoxTarget>& targets);
BoxColumns box_columns(const std::vector<BoxTarget>& targets, std::size_t grid);

/// Batch means of 1 - GIoU and of the per-coordinate absolute error.
Tensor giou_loss(const BoxColumns& pred, const BoxColumns& gt);
Tensor l1_loss(const BoxColumns& pred, const BoxColumns& gt);

/// Maps between search-crop pixels and image pixels: image = origin + crop / scale.
struct CropMeta {
  double origin_x = 0, origin_y = 0;
  double scale = 1;
  std::size_t crop_size = 64;
  double image_w = 0, image_h = 0;  // 0 disables clipping

  BBox to_image(const BBox& crop_box) const;
  BBox to_crop(const BBox& image_box) const;
};

struct DecodeOptions {
  bool window = true;
  double window_weight = 0.49;
};

/// Hann window over the grid, outer product of 0.5 - 0.5 cos(2 pi k / (G+1)), k = 1..G.
std::vector<double> hanning_window(std::size_t grid);

/// Box of sample `index`: argmax cell of the (optionally windowed) score map,
/// first index in row-major order on ties, mapped to the image frame and
/// clipped to its bounds.
BBox decode(const HeadOutput& out, const CropMeta& meta, const DecodeOptions& opt = {}, std::size_t index = 0);

}  // namespace aio::inline AIO_ABI
