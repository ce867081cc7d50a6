#include "coast/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "coast/rng.hpp"

namespace coast {

Image synth_image(int h, int w, uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x5EED'1Da7aull));
  NdArray pix({h, w});

  // Low-frequency cosine background.
  const int waves = 3 + static_cast<int>(rng.below(3));
  std::vector<std::array<double, 4>> comps;
  for (int i = 0; i < waves; ++i)
    comps.push_back({rng.uniform(0.5, 3.0) / h, rng.uniform(0.5, 3.0) / w,
                     rng.uniform(0.0, 6.283), rng.uniform(0.08, 0.22)});
  const double gx = rng.uniform(-0.3, 0.3) / w;
  const double gy = rng.uniform(-0.3, 0.3) / h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.5 + gx * x + gy * y;
      for (const auto& c : comps)
        v += c[3] * std::cos(6.283185307179586 * (c[0] * y + c[1] * x) + c[2]);
      pix.at(y, x) = v;
    }

  // Soft-edged discs and rectangles.
  const int shapes = 4 + static_cast<int>(rng.below(4));
  for (int s = 0; s < shapes; ++s) {
    const double cy = rng.uniform(0.1, 0.9) * h;
    const double cx = rng.uniform(0.1, 0.9) * w;
    const double amp = rng.uniform(-0.35, 0.35);
    const double edge = rng.uniform(0.8, 2.5);
    if (rng.below(2) == 0) {
      const double rad = rng.uniform(0.05, 0.22) * std::min(h, w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double d = std::hypot(y - cy, x - cx) - rad;
          pix.at(y, x) += amp / (1.0 + std::exp(d / edge));
        }
    } else {
      const double hh = rng.uniform(0.05, 0.2) * h;
      const double hw = rng.uniform(0.05, 0.2) * w;
      const double ang = rng.uniform(0.0, 3.1415926);
      const double ca = std::cos(ang), sa = std::sin(ang);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double ry = ca * (y - cy) + sa * (x - cx);
          const double rx = -sa * (y - cy) + ca * (x - cx);
          const double d =
              std::max(std::fabs(ry) - hh, std::fabs(rx) - hw);
          pix.at(y, x) += amp / (1.0 + std::exp(d / edge));
        }
    }
  }

  // Light oriented texture in a random band.
  const double freq = rng.uniform(0.05, 0.18);
  const double ang = rng.uniform(0.0, 3.1415926);
  const double ca = std::cos(ang), sa = std::sin(ang);
  const double tamp = rng.uniform(0.02, 0.06);
  const double band_y = rng.uniform(0.2, 0.8) * h;
  const double band_h = rng.uniform(0.15, 0.4) * h;
  for (int y = 0; y < h; ++y) {
    const double fade =
        1.0 / (1.0 + std::exp((std::fabs(y - band_y) - band_h) / 3.0));
    for (int x = 0; x < w; ++x)
      pix.at(y, x) +=
          tamp * fade * std::sin(6.283185307179586 * freq * (ca * y + sa * x));
  }

  return make_image(h, w, 1, pix);
}

std::vector<std::string> write_synth_dataset(const std::string& dir,
                                             int count, int h, int w,
                                             uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%03d.pgm", i);
    const std::string path = (std::filesystem::path(dir) / name).string();
    write_image(synth_image(h, w, splitmix64(seed + 0x1000u + i)), path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace coast
