#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "aio/head/head.hpp"

namespace aio::inline AIO_ABI {

/// 8-bit interleaved RGB.
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}
  std::uint8_t* pixel(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const { return &rgb[(y * width + x) * 3]; }
};

void write_ppm(const std::filesystem::path& file, const Image& img);
Image read_ppm(const std::filesystem::path& file);
/// PPM always; JPEG when built with libjpeg.
Image load_image(const std::filesystem::path& file);
bool jpeg_supported();

/// Pixel value mapping used for network input: v / 127.5 - 1.
inline Real normalize_pixel(std::uint8_t v) { return Real(double(v) / 127.5 - 1.0); }

/// Square crop of side `side` image pixels centred on (cx, cy), resampled
/// bilinearly to out x out and returned channel-major [3, out, out] in
/// normalised units. Outside the image reads as black.
std::vector<Real> crop_resize(const Image& img, double cx, double cy, double side, std::size_t out, CropMeta* meta);

}  // namespace aio::inline AIO_ABI
