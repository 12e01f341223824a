#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace splat {

// Row-major interleaved image, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c = 3, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  size_t size() const { return data.size(); }

  double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Per-pixel boolean mask, row-major.
struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;

  PixelMask() = default;
  PixelMask(int w, int h, bool fill = false)
      : width(w), height(h), bits(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  bool operator()(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  size_t count() const;
};

// Square dilation with a kernel of side `side`, clipped at the borders.
// Offsets run from -side/2 to side-1-side/2 so an even side covers exactly
// side pixels.
PixelMask dilate(const PixelMask& m, int side);

// 8-bit PNG (RGB or gray). Values are clamped to [0,1] and rounded.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);
void write_mask_png(const std::string& path, const PixelMask& m);

// "QIMG" float dump: magic, H u32, W u32, C u32, then H*W*C f32, all LE.
void write_qimg(const std::string& path, const Image& img);
Image read_qimg(const std::string& path);

// Quantize to the 8-bit grid a PNG round trip would produce.
Image quantize8(const Image& img);

} // namespace splat
