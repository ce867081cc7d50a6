#pragma once

#include "coast/image.hpp"

namespace coast {

// Peak PSNR reported for identical images, keeping CSVs numeric.
inline constexpr double kPsnrSentinel = 99.0;

// 10 log10(1 / MSE) over all elements, MAX = 1. Same-shape images only.
double psnr(const Image& a, const Image& b);

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1. Windows are fully inside the image, so
// min(H, W) must be >= 11. 1-channel images only.
double ssim(const Image& a, const Image& b);

}  // namespace coast
