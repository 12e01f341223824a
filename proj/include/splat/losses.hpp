#pragma once

#include "splat/image.hpp"

namespace splat {

struct LossValue {
  double value = 0;
  Image gradient; // dL/dpred, same shape as pred
};

LossValue l1_loss(const Image& pred, const Image& target);
LossValue mse_loss(const Image& pred, const Image& target);

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

// Mean SSIM over pixels and channels; the gradient is d(ssim)/d(pred).
LossValue ssim(const Image& pred, const Image& target);
// (1 - ssim) / 2
LossValue dssim(const Image& pred, const Image& target);

constexpr double kDefaultSsimWeight = 0.2;

// lambda * dssim + (1 - lambda) * l1
LossValue combined_loss(const Image& pred, const Image& target, double lambda = kDefaultSsimWeight);

// -10 log10(mse), 100 dB when mse < 1e-10.
double psnr(const Image& pred, const Image& target);
double psnr_from_mse(double mse);

} // namespace splat
