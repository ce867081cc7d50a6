#include "coast/metrics.hpp"

#include <cmath>
#include <vector>

namespace coast {

namespace {

void check_pair(const Image& a, const Image& b, const char* op) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw DimensionError(std::string(op) + ": image dimensions differ");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_pair(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrSentinel;
  return std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b, "ssim");
  if (a.channels != 1) throw DimensionError("ssim: image must be 1-channel");
  constexpr int kWin = 11;
  if (a.height < kWin || a.width < kWin)
    throw DimensionError("ssim: image smaller than the 11x11 window");

  // Normalized 11x11 Gaussian, sigma 1.5.
  double win[kWin][kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double dy = i - 5, dx = j - 5;
      win[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
      wsum += win[i][j];
    }
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) win[i][j] /= wsum;

  constexpr double c1 = 0.01 * 0.01;  // (K1 L)^2, L = 1
  constexpr double c2 = 0.03 * 0.03;

  double total = 0.0;
  long count = 0;
  for (int y = 0; y + kWin <= a.height; ++y)
    for (int x = 0; x + kWin <= a.width; ++x) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double w = win[i][j];
          const double va = a.at(0, y + i, x + j);
          const double vb = b.at(0, y + i, x + j);
          mx += w * va;
          my += w * vb;
          sxx += w * va * va;
          syy += w * vb * vb;
          sxy += w * va * vb;
        }
      sxx -= mx * mx;
      syy -= my * my;
      sxy -= mx * my;
      const double num = (2 * mx * my + c1) * (2 * sxy + c2);
      const double den = (mx * mx + my * my + c1) * (sxx + syy + c2);
      total += num / den;
      ++count;
    }
  return total / count;
}

}  // namespace coast
