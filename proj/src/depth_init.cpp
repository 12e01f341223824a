#include "splat/depth_init.hpp"

#include "splat/error.hpp"

#include <cmath>

namespace splat {

ScaleShift align_scale_shift(std::span<const double> pred, std::span<const double> truth) {
  require(pred.size() == truth.size(), ErrorKind::dimension_mismatch, "depth sample counts differ");
  require(pred.size() >= 2, ErrorKind::invalid_input, "scale-shift fit needs at least 2 samples");
  const double n = static_cast<double>(pred.size());
  double mp = 0, mt = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mt += truth[i];
  }
  mp /= n;
  mt /= n;
  double spp = 0, spt = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    spp += (pred[i] - mp) * (pred[i] - mp);
    spt += (pred[i] - mp) * (truth[i] - mt);
  }
  require(spp > 0, ErrorKind::invalid_input, "predicted depths are all equal");
  const double a = spt / spp;
  return {a, mt - a * mp};
}

ColoredPoints backproject_fill(std::span<const double> depth, const PixelMask& mask,
                               const Camera& cam, int stride, const Image* frame) {
  require(stride >= 1, ErrorKind::invalid_input, "stride must be >= 1");
  require(mask.width == cam.width && mask.height == cam.height &&
              depth.size() == static_cast<size_t>(cam.width) * cam.height,
          ErrorKind::dimension_mismatch, "depth or mask size differs from the camera");
  if (frame)
    require(frame->width == cam.width && frame->height == cam.height && frame->channels == 3,
            ErrorKind::dimension_mismatch, "frame size differs from the camera");
  ColoredPoints out;
  const Mat3 rt = cam.rotation.transpose();
  for (int y = 0; y < cam.height; y += stride)
    for (int x = 0; x < cam.width; x += stride) {
      if (!mask(x, y))
        continue;
      const double z = depth[static_cast<size_t>(y) * cam.width + x];
      if (!(z > cam.near_clip) || !std::isfinite(z))
        continue;
      const Vec3 pc((x - cam.cx) / cam.fx * z, (y - cam.cy) / cam.fy * z, z);
      out.points.push_back(rt * (pc - cam.translation));
      out.colors.push_back(frame ? Vec3(frame->at(x, y, 0), frame->at(x, y, 1), frame->at(x, y, 2))
                                 : Vec3(0.5, 0.5, 0.5));
    }
  return out;
}

PixelMask low_alpha_mask(std::span<const double> alpha, int width, int height, double t_z) {
  require(alpha.size() == static_cast<size_t>(width) * height, ErrorKind::dimension_mismatch,
          "alpha size differs from the image");
  PixelMask m(width, height);
  for (size_t i = 0; i < alpha.size(); ++i)
    m.bits[i] = alpha[i] < t_z ? 1 : 0;
  return m;
}

} // namespace splat
