#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "coast/metrics.hpp"
#include "coast/rng.hpp"

using namespace coast;

namespace {

Image random_image(int h, int w, uint64_t seed) {
  Rng rng(seed);
  NdArray v({h, w});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform();
  return make_image(h, w, 1, v);
}

// Direct re-implementation of windowed SSIM with explicit convolution
// loops; shares only the published constants with the library.
double ssim_reference(const Image& a, const Image& b) {
  const int win = 11;
  double g[11][11], wsum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      g[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) /
                         4.5);
      wsum += g[i][j];
    }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int y0 = 0; y0 + win <= a.height; ++y0)
    for (int x0 = 0; x0 + win <= a.width; ++x0) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double w = g[i][j] / wsum;
          mx += w * a.at(0, y0 + i, x0 + j);
          my += w * b.at(0, y0 + i, x0 + j);
          xx += w * a.at(0, y0 + i, x0 + j) * a.at(0, y0 + i, x0 + j);
          yy += w * b.at(0, y0 + i, x0 + j) * b.at(0, y0 + i, x0 + j);
          xy += w * a.at(0, y0 + i, x0 + j) * b.at(0, y0 + i, x0 + j);
        }
      const double vx = xx - mx * mx, vy = yy - my * my, vxy = xy - mx * my;
      total += ((2 * mx * my + c1) * (2 * vxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("psnr of identical images is the 99 dB sentinel") {
  const Image img = random_image(16, 16, 1);
  CHECK(psnr(img, img) == 99.0);
}

TEST_CASE("psnr of constant 0 vs constant 1 is 0 dB") {
  Image zero(8, 8, 1);
  Image one(8, 8, 1);
  one.data.fill(1.0);
  CHECK(psnr(zero, one) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("psnr matches the scalar formula") {
  const Image a = random_image(12, 9, 2);
  const Image b = random_image(12, 9, 3);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= a.data.size();
  CHECK(psnr(a, b) ==
        doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-10));
}

TEST_CASE("psnr is symmetric and rejects shape mismatch") {
  const Image a = random_image(10, 10, 4);
  const Image b = random_image(10, 10, 5);
  CHECK(psnr(a, b) == psnr(b, a));
  const Image c = random_image(10, 11, 6);
  CHECK_THROWS_AS(psnr(a, c), DimensionError);
}

TEST_CASE("ssim of an image with itself is exactly 1") {
  const Image img = random_image(20, 20, 7);
  CHECK(ssim(img, img) == 1.0);
}

TEST_CASE("ssim against the inverted image is below 1") {
  const Image a = random_image(24, 24, 8);
  Image b = a;
  for (std::size_t i = 0; i < b.data.size(); ++i)
    b.data[i] = 1.0 - b.data[i];
  CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("ssim matches an independent direct-convolution implementation") {
  const Image a = random_image(32, 32, 9);
  const Image b = random_image(32, 32, 10);
  CHECK(ssim(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-8));
}

TEST_CASE("ssim is symmetric") {
  const Image a = random_image(16, 18, 11);
  const Image b = random_image(16, 18, 12);
  CHECK(std::fabs(ssim(a, b) - ssim(b, a)) < 1e-12);
}

TEST_CASE("ssim rejects images smaller than the window") {
  const Image a = random_image(10, 16, 13);
  CHECK_THROWS_AS(ssim(a, a), DimensionError);
}
