#include "aio/data/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#ifdef AIO_HAVE_JPEG
#include <jpeglib.h>
#endif

namespace aio::inline AIO_ABI {

void write_ppm(const std::filesystem::path& file, const Image& img) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (!out) throw IoError("short write to " + file.string());
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

}  // namespace

Image read_ppm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  if (header_token(in) != "P6") throw ParseError(file.string() + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(header_token(in));
    h = std::stoul(header_token(in));
    maxval = std::stoul(header_token(in));
  } catch (const std::exception&) {
    throw ParseError(file.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval != 255) throw ParseError(file.string() + ": unsupported PPM geometry or depth");
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (in.gcount() != std::streamsize(img.rgb.size())) throw ParseError(file.string() + ": truncated pixel data");
  return img;
}

bool jpeg_supported() {
#ifdef AIO_HAVE_JPEG
  return true;
#else
  return false;
#endif
}

#ifdef AIO_HAVE_JPEG
namespace {

Image read_jpeg(const std::filesystem::path& file) {
  std::FILE* fp = std::fopen(file.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + file.string());
  jpeg_decompress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jerr.error_exit = [](j_common_ptr c) {
    char msg[JMSG_LENGTH_MAX];
    (*c->err->format_message)(c, msg);
    throw ParseError(std::string("jpeg: ") + msg);
  };
  try {
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    Image img(cinfo.output_width, cinfo.output_height);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = img.pixel(0, cinfo.output_scanline);
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    return img;
  } catch (...) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    throw;
  }
}

}  // namespace
#endif

Image load_image(const std::filesystem::path& file) {
  auto ext = file.extension().string();
  for (auto& c : ext) c = char(std::tolower(c));
  if (ext == ".ppm") return read_ppm(file);
  if (ext == ".jpg" || ext == ".jpeg") {
#ifdef AIO_HAVE_JPEG
    return read_jpeg(file);
#else
    throw IoError(file.string() + ": JPEG frames need a build with libjpeg");
#endif
  }
  throw IoError(file.string() + ": unsupported frame format");
}

std::vector<Real> crop_resize(const Image& img, double cx, double cy, double side, std::size_t out, CropMeta* meta) {
  if (!(side > 0) || out == 0) throw ContractError("crop needs a positive side and output size");
  const double scale = double(out) / side;
  const double ox = cx - side / 2, oy = cy - side / 2;
  if (meta) *meta = {ox, oy, scale, out, double(img.width), double(img.height)};
  const Real black = normalize_pixel(0);
  std::vector<Real> chw(3 * out * out);
  const auto plane = out * out;
  const long w = long(img.width), h = long(img.height);
  for (std::size_t v = 0; v < out; ++v) {
    const double sy = oy + (double(v) + 0.5) / scale - 0.5;
    const double fy = std::floor(sy);
    const double ty = sy - fy;
    const long y0 = long(fy);
    for (std::size_t u = 0; u < out; ++u) {
      const double sx = ox + (double(u) + 0.5) / scale - 0.5;
      const double fx = std::floor(sx);
      const double tx = sx - fx;
      const long x0 = long(fx);
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const double wgt = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty);
            if (wgt == 0) continue;
            const long xx = x0 + dx, yy = y0 + dy;
            const double val = (xx < 0 || yy < 0 || xx >= w || yy >= h) ? double(black)
                                                                          : double(normalize_pixel(img.pixel(std::size_t(xx), std::size_t(yy))[c]));
            acc += wgt * val;
          }
        chw[c * plane + v * out + u] = Real(acc);
      }
    }
  }
  return chw;
}

}  // namespace aio::inline AIO_ABI
