#include "splat/image.hpp"

#include "splat/bytes.hpp"
#include "splat/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

namespace splat {

size_t PixelMask::count() const {
  return static_cast<size_t>(std::count(bits.begin(), bits.end(), uint8_t{1}));
}

namespace {

// One-dimensional dilation along rows (stride 1) or columns (stride width)
// using a running window count.
void dilate_lines(const std::vector<uint8_t>& in, std::vector<uint8_t>& out, int lines, int length,
                  size_t line_stride, size_t step, int side) {
  const int lo = -(side / 2);
  const int hi = side - 1 - side / 2;
  std::vector<int> prefix(static_cast<size_t>(length) + 1);
  for (int l = 0; l < lines; ++l) {
    const size_t base = static_cast<size_t>(l) * line_stride;
    prefix[0] = 0;
    for (int i = 0; i < length; ++i)
      prefix[i + 1] = prefix[i] + (in[base + i * step] ? 1 : 0);
    for (int i = 0; i < length; ++i) {
      // sources s with i - s in [lo, hi]
      const int a = std::max(0, i - hi);
      const int b = std::min(length - 1, i - lo);
      out[base + i * step] = (a <= b && prefix[b + 1] - prefix[a] > 0) ? 1 : 0;
    }
  }
}

} // namespace

PixelMask dilate(const PixelMask& m, int side) {
  require(side >= 1, ErrorKind::invalid_input, "dilation side must be >= 1");
  if (side == 1 || m.bits.empty())
    return m;
  PixelMask tmp(m.width, m.height);
  PixelMask out(m.width, m.height);
  dilate_lines(m.bits, tmp.bits, m.height, m.width, static_cast<size_t>(m.width), 1, side);
  dilate_lines(tmp.bits, out.bits, m.width, m.height, 1, static_cast<size_t>(m.width), side);
  return out;
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const { std::fclose(f); }
};

void write_png_bytes(const std::string& path, int w, int h, int channels,
                     const std::vector<uint8_t>& pixels) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp)
    fail(ErrorKind::io_error, "cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io_error, "libpng failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed compression settings keep the output byte-identical between runs.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, pixels.data() + static_cast<size_t>(y) * w * channels);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

} // namespace

void write_png(const std::string& path, const Image& img) {
  require(img.channels == 1 || img.channels == 3, ErrorKind::invalid_input,
          "PNG export supports 1 or 3 channels");
  std::vector<uint8_t> px(img.data.size());
  std::transform(img.data.begin(), img.data.end(), px.begin(), to_byte);
  write_png_bytes(path, img.width, img.height, img.channels, px);
}

void write_mask_png(const std::string& path, const PixelMask& m) {
  std::vector<uint8_t> px(m.bits.size());
  std::transform(m.bits.begin(), m.bits.end(), px.begin(),
                 [](uint8_t b) { return static_cast<uint8_t>(b ? 255 : 0); });
  write_png_bytes(path, m.width, m.height, 1, px);
}

Image read_png(const std::string& path) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp)
    fail(ErrorKind::io_error, "cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::io_error, "libpng failed reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = png_get_channels(png, info);
  std::vector<uint8_t> px(static_cast<size_t>(w) * h * ch);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[y] = px.data() + static_cast<size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(w, h, ch);
  for (size_t i = 0; i < px.size(); ++i)
    img.data[i] = px[i] / 255.0;
  return img;
}

void write_qimg(const std::string& path, const Image& img) {
  ByteWriter w;
  w.tag("QIMG");
  w.u32(static_cast<uint32_t>(img.height));
  w.u32(static_cast<uint32_t>(img.width));
  w.u32(static_cast<uint32_t>(img.channels));
  for (double v : img.data)
    w.f32(static_cast<float>(v));
  write_file(path, w.data());
}

Image read_qimg(const std::string& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  if (!r.tag("QIMG"))
    fail(ErrorKind::decode_error, path + ": bad QIMG magic");
  const uint32_t h = r.u32(), w = r.u32(), c = r.u32();
  Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  for (auto& v : img.data)
    v = r.f32();
  return img;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (auto& v : out.data)
    v = to_byte(v) / 255.0;
  return out;
}

} // namespace splat
