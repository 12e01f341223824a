#include "splat/losses.hpp"

#include "splat/error.hpp"

#include <array>
#include <cmath>

namespace splat {

namespace {

void check_shapes(const Image& a, const Image& b) {
  require(a.same_shape(b), ErrorKind::dimension_mismatch, "image shapes differ");
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (auto& v : w)
    v /= sum;
  return w;
}

// Zero-padded "same" separable convolution of one channel plane.
void blur(const std::vector<double>& in, std::vector<double>& out, int w, int h) {
  static const auto win = gaussian_window();
  constexpr int r = kSsimWindow / 2;
  std::vector<double> tmp(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w)
          acc += win[k + r] * in[static_cast<size_t>(y) * w + xx];
      }
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  out.assign(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h)
          acc += win[k + r] * tmp[static_cast<size_t>(yy) * w + x];
      }
      out[static_cast<size_t>(y) * w + x] = acc;
    }
}

} // namespace

LossValue l1_loss(const Image& pred, const Image& target) {
  check_shapes(pred, target);
  LossValue out{0, Image(pred.width, pred.height, pred.channels)};
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    out.value += std::abs(d);
    out.gradient.data[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
  }
  out.value *= inv;
  return out;
}

LossValue mse_loss(const Image& pred, const Image& target) {
  check_shapes(pred, target);
  LossValue out{0, Image(pred.width, pred.height, pred.channels)};
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    out.value += d * d;
    out.gradient.data[i] = 2 * d * inv;
  }
  out.value *= inv;
  return out;
}

LossValue ssim(const Image& pred, const Image& target) {
  check_shapes(pred, target);
  require(pred.width >= kSsimWindow && pred.height >= kSsimWindow, ErrorKind::invalid_input,
          "image smaller than the SSIM window");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int w = pred.width, h = pred.height, nc = pred.channels;
  const size_t np = pred.pixel_count();
  LossValue out{0, Image(w, h, nc)};
  if (pred.data == target.data) {
    out.value = 1.0;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(np * nc);

  std::vector<double> x(np), y(np), xx(np), yy(np), xy(np);
  std::vector<double> mx, my, mxx, myy, mxy;
  std::vector<double> a(np), b(np), c(np), ga, gb, gc;
  for (int ch = 0; ch < nc; ++ch) {
    for (size_t i = 0; i < np; ++i) {
      x[i] = pred.data[i * nc + ch];
      y[i] = target.data[i * nc + ch];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    blur(x, mx, w, h);
    blur(y, my, w, h);
    blur(xx, mxx, w, h);
    blur(yy, myy, w, h);
    blur(xy, mxy, w, h);
    for (size_t i = 0; i < np; ++i) {
      const double ux = mx[i], uy = my[i];
      const double vx = mxx[i] - ux * ux, vy = myy[i] - uy * uy, cxy = mxy[i] - ux * uy;
      const double a1 = 2 * ux * uy + c1, a2 = 2 * cxy + c2;
      const double b1 = ux * ux + uy * uy + c1, b2 = vx + vy + c2;
      const double s = a1 * a2 / (b1 * b2);
      out.value += s;
      // Partials with respect to the blurred raw moments E[x], E[x^2], E[xy].
      const double ds_dux = 2 * uy * a2 / (b1 * b2) - 2 * s * ux / b1;
      const double ds_dvx = -s / b2;
      const double ds_dcxy = 2 * a1 / (b1 * b2);
      a[i] = ds_dux - 2 * ux * ds_dvx - uy * ds_dcxy;
      b[i] = ds_dvx;
      c[i] = ds_dcxy;
    }
    // The window is symmetric, so the adjoint of the blur is the blur.
    blur(a, ga, w, h);
    blur(b, gb, w, h);
    blur(c, gc, w, h);
    for (size_t i = 0; i < np; ++i)
      out.gradient.data[i * nc + ch] = inv * (ga[i] + 2 * x[i] * gb[i] + y[i] * gc[i]);
  }
  out.value *= inv;
  return out;
}

LossValue dssim(const Image& pred, const Image& target) {
  LossValue s = ssim(pred, target);
  s.value = (1 - s.value) / 2;
  for (auto& g : s.gradient.data)
    g *= -0.5;
  return s;
}

LossValue combined_loss(const Image& pred, const Image& target, double lambda) {
  require(lambda >= 0 && lambda <= 1, ErrorKind::invalid_input, "loss weight must be in [0,1]");
  LossValue l1 = l1_loss(pred, target);
  if (lambda == 0)
    return l1;
  const LossValue d = dssim(pred, target);
  l1.value = lambda * d.value + (1 - lambda) * l1.value;
  for (size_t i = 0; i < l1.gradient.size(); ++i)
    l1.gradient.data[i] = lambda * d.gradient.data[i] + (1 - lambda) * l1.gradient.data[i];
  return l1;
}

double psnr_from_mse(double mse) {
  if (mse < 1e-10)
    return 100.0;
  return -10.0 * std::log10(mse);
}

double psnr(const Image& pred, const Image& target) {
  check_shapes(pred, target);
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(pred.size()));
}

} // namespace splat
